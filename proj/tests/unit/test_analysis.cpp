#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fuselab/analysis/cross_validation.hpp"
#include "fuselab/analysis/metrics.hpp"
#include "fuselab/analysis/sobol_indices.hpp"
#include "fuselab/synthetic.hpp"
#include "gp_fixtures.hpp"

using namespace fuselab;
using namespace fuselab::analysis;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint32_t seed, double scale = 1.0) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

// y = f(x) scaled to unit variance on the sample, plus N(0, noise_var).
gp::MixedDataset unit_variance_data(std::size_t n, std::size_t dx, double noise_var, std::uint64_t seed) {
    auto d = fixtures::sample(n, dx, 0.0, 1.0, [](const std::vector<double>& x) {
        double s = std::sin(3.0 * x[0]);
        for (std::size_t k = 1; k < x.size(); ++k) s += std::cos(2.0 * x[k]) / static_cast<double>(k + 1);
        return s;
    }, 0.0, seed);
    const double mean = std::accumulate(d.response.begin(), d.response.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double y : d.response) ss += (y - mean) * (y - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    Rng rng(derive_seed(seed, 7));
    for (auto& y : d.response) y = (y - mean) / sd + (noise_var > 0 ? rng.normal(0.0, std::sqrt(noise_var)) : 0.0);
    return d;
}

gp::FitConfig quick(int starts = 2) {
    gp::FitConfig c;
    c.n_starts = starts;
    return c;
}

// Closed-form indices of y = x1^2 + x2^2 + x1 x2 + x3^2 + 1e-3 x4^2 on (-1, 1)^4.
struct Quadratic {
    static double f(const std::vector<double>& x) {
        return x[0] * x[0] + x[1] * x[1] + x[0] * x[1] + x[2] * x[2] + 1e-3 * x[3] * x[3];
    }
    static std::vector<SobolFeature> features() {
        std::vector<SobolFeature> fs;
        for (int k = 1; k <= 4; ++k) fs.push_back(SobolFeature::quantitative("x" + std::to_string(k), -1.0, 1.0));
        return fs;
    }
};

BatchModel batch(double (*f)(const std::vector<double>&)) {
    return [f](const std::vector<std::vector<double>>& rows) {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(f(r));
        return out;
    };
}

}  // namespace

TEST(PredictionError, ZeroForPerfectPrediction) {
    const std::vector<double> y{1, 2, 3};
    EXPECT_EQ(prediction_error(y, y), 0.0);
}

TEST(PredictionError, RootForm) {
    const std::vector<double> y{0, 0}, p{3, 4};
    EXPECT_DOUBLE_EQ(prediction_error(y, p), std::sqrt(12.5));
    EXPECT_DOUBLE_EQ(prediction_error(y, p, true), 12.5);
}

TEST(PredictionError, Homogeneous) {
    const auto y = random_vector(30, 1), p = random_vector(30, 2);
    for (double c : {-3.0, 0.5, 10.0}) {
        std::vector<double> cy, cp;
        for (std::size_t i = 0; i < y.size(); ++i) {
            cy.push_back(c * y[i]);
            cp.push_back(c * p[i]);
        }
        EXPECT_NEAR(prediction_error(cy, cp), std::abs(c) * prediction_error(y, p), 1e-12 * std::abs(c));
    }
}

TEST(PredictionError, LengthMismatch) {
    const std::vector<double> a{1, 2}, b{1};
    EXPECT_THROW(prediction_error(a, b), DomainError);
}

TEST(RSquared, Extremes) {
    const std::vector<double> y{1, 4, 2, 8};
    EXPECT_EQ(r_squared(y, y), 1.0);
    const std::vector<double> m(4, 3.75);
    EXPECT_NEAR(r_squared(y, m), 0.0, 1e-15);
    const std::vector<double> c{2, 2, 2, 2};
    EXPECT_THROW(r_squared(c, y), DomainError);
}

TEST(RSquared, MatchesTwoPassOracle) {
    for (std::uint32_t s = 0; s < 5; ++s) {
        const auto y = random_vector(20, 10 + s), p = random_vector(20, 20 + s);
        long double mean = 0;
        for (double v : y) mean += v;
        mean /= 20;
        long double tot = 0, res = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            tot += (y[i] - mean) * (y[i] - mean);
            res += (y[i] - p[i]) * (y[i] - p[i]);
        }
        EXPECT_NEAR(r_squared(y, p), static_cast<double>(1 - res / tot), 1e-12);
    }
}

TEST(Pearson, Trivial) {
    const auto x = random_vector(25, 3);
    std::vector<double> lin, neg;
    for (double v : x) {
        lin.push_back(2 * v + 3);
        neg.push_back(-v);
    }
    const auto m = pearson_matrix({"x", "lin", "neg"}, {x, lin, neg});
    EXPECT_EQ(m.r[0][0], 1.0);
    EXPECT_NEAR(m.r[0][1], 1.0, 1e-14);
    EXPECT_NEAR(m.r[0][2], -1.0, 1e-14);
    EXPECT_EQ(m.r[1][2], m.r[2][1]);
}

TEST(Pearson, MatchesCovarianceOracle) {
    for (std::uint32_t s = 0; s < 5; ++s) {
        const auto a = random_vector(50, 30 + s), b = random_vector(50, 40 + s, 3.0);
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < 50; ++i) {
            ma += a[i] / 50;
            mb += b[i] / 50;
        }
        double cov = 0, va = 0, vb = 0;
        for (std::size_t i = 0; i < 50; ++i) {
            cov += (a[i] - ma) * (b[i] - mb) / 49;
            va += (a[i] - ma) * (a[i] - ma) / 49;
            vb += (b[i] - mb) * (b[i] - mb) / 49;
        }
        EXPECT_NEAR(pearson_matrix({"a", "b"}, {a, b}).r[0][1], cov / std::sqrt(va * vb), 1e-12);
    }
}

TEST(Pearson, ConstantColumnIsNamed) {
    const std::vector<double> a{1, 2, 3}, c{5, 5, 5};
    try {
        pearson_matrix({"a", "flat"}, {a, c});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    }
}

TEST(AssignFolds, LeaveOneOut) {
    const auto f = assign_folds(10, 10, 3);
    EXPECT_EQ(std::set<std::size_t>(f.begin(), f.end()).size(), 10u);
}

TEST(AssignFolds, FiveFoldsOf270) {
    const auto f = assign_folds(270, 5, 11);
    std::vector<std::size_t> count(5, 0);
    for (auto v : f) ++count[v];
    EXPECT_EQ(count, std::vector<std::size_t>(5, 54));
}

TEST(AssignFolds, SizesDifferByAtMostOne) {
    for (std::size_t n : {7u, 23u, 101u}) {
        const auto f = assign_folds(n, 4, n);
        std::vector<std::size_t> count(4, 0);
        for (auto v : f) ++count[v];
        EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1u);
    }
}

TEST(AssignFolds, Preconditions) {
    EXPECT_THROW(assign_folds(10, 1, 0), DomainError);
    EXPECT_THROW(assign_folds(3, 4, 0), DomainError);
}

TEST(KfoldCv, LeaveOneOutReport) {
    const auto d = unit_variance_data(10, 1, 0.0, 4);
    const auto rep = kfold_cv(d, 10, quick(1), 4, false, false);
    ASSERT_EQ(rep.folds.size(), 10u);
    for (const auto& f : rep.folds) EXPECT_EQ(f.size, 1u);
    for (double p : rep.predictions) EXPECT_TRUE(std::isfinite(p));
}

TEST(KfoldCv, FoldSizesOnCampaign) {
    synthetic::CampaignSpec spec;
    const auto c = synthetic::generate_campaign(spec);
    const auto d = hierarchy::hardness_dataset(c.cuboids, false);
    auto cfg = quick(1);
    cfg.max_iterations = 40;
    const auto rep = kfold_cv(d, 5, cfg, 2, false, false);
    for (const auto& f : rep.folds) {
        EXPECT_EQ(f.size, 54u);
        EXPECT_FALSE(f.failed) << f.error;
    }
    EXPECT_GT(rep.r_squared, 0.8);
}

TEST(KfoldCv, FoldMseStraddlesNoiseVariance) {
    double lo = 1e9, hi = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto d = unit_variance_data(100, 2, 0.01, seed);
        const auto rep = kfold_cv(d, 5, quick(2), seed, true, false);
        for (const auto& f : rep.folds) {
            ASSERT_FALSE(f.failed) << f.error;
            lo = std::min(lo, f.metric);
            hi = std::max(hi, f.metric);
        }
    }
    EXPECT_LT(lo, 0.01 * 3);
    EXPECT_GT(hi, 0.01 / 3);
}

TEST(KfoldCv, TextualReportIsReproducible) {
    const auto d = unit_variance_data(40, 2, 0.01, 9);
    const auto a = to_json(kfold_cv(d, 4, quick(2), 21)).dump();
    const auto b = to_json(kfold_cv(d, 4, quick(2), 21)).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, to_json(kfold_cv(d, 4, quick(2), 22)).dump());
}

TEST(KfoldCv, ParallelFoldsMatchSerial) {
    const auto d = unit_variance_data(40, 2, 0.01, 10);
    auto par = quick(2);
    par.jobs = 3;
    EXPECT_EQ(to_json(kfold_cv(d, 4, quick(2), 5)).dump(), to_json(kfold_cv(d, 4, par, 5)).dump());
}

TEST(NoiseVariance, NoiseFreeData) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = fixtures::sample(50, 4, -1.0, 1.0, Quadratic::f, 0.0, seed);
        EXPECT_LE(estimate_noise_variance(d, quick(3), seed), 1e-4) << "seed " << seed;
    }
}

TEST(NoiseVariance, RecoversInjectedNoise) {
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const double tau = estimate_noise_variance(unit_variance_data(150, 2, 0.05, 100 + seed), quick(2), seed);
        hits += tau >= 0.02 && tau <= 0.1;
    }
    EXPECT_GE(hits, 9);
}

TEST(NoiseVariance, InvariantToOutputScale) {
    auto d = unit_variance_data(60, 2, 0.05, 13);
    const double a = estimate_noise_variance(d, quick(2), 13);
    for (auto& y : d.response) y *= 10.0;
    const double b = estimate_noise_variance(d, quick(2), 13);
    EXPECT_NEAR(a, b, 1e-9 + 1e-6 * a);
}

TEST(CampaignFolds, TensileRowsFollowTheirCuboid) {
    synthetic::CampaignSpec spec;
    const auto c = synthetic::generate_campaign(spec);
    const auto f = assign_campaign_folds(c.cuboids, c.tensile, 5, 8);
    for (std::size_t t = 0; t < c.tensile.size(); ++t) {
        for (std::size_t i = 0; i < c.cuboids.size(); ++i) {
            if (c.cuboids[i].params == c.tensile[t].params) {
                EXPECT_EQ(f.tensile[t], f.cuboid[i]);
            }
        }
    }
}

TEST(Sobol, ClosedFormQuadratic) {
    const auto rep = sobol_indices(batch(&Quadratic::f), Quadratic::features(), 8192, 1);
    // V = 3 * 4/45 + 1/9 (+ negligible x4 term); the x1 x2 product adds 1/9 to both totals.
    const double v = 3 * 4.0 / 45 + 1.0 / 9 + 1e-6 * 4.0 / 45;
    const std::vector<double> main = {(4.0 / 45) / v, (4.0 / 45) / v, (4.0 / 45) / v, 1e-6 * (4.0 / 45) / v};
    const std::vector<double> total = {(4.0 / 45 + 1.0 / 9) / v, (4.0 / 45 + 1.0 / 9) / v, (4.0 / 45) / v, main[3]};
    EXPECT_NEAR(main[0], 0.2353, 1e-4);
    EXPECT_NEAR(total[0], 0.5294, 1e-4);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(rep.main[i], main[i], 0.02) << i;
        EXPECT_NEAR(rep.total[i], total[i], 0.02) << i;
    }
}

TEST(Sobol, ReferenceQuadraticValues) {
    const auto rep = sobol_indices(batch(&Quadratic::f), Quadratic::features(), 8192, 2);
    const std::vector<double> main = {0.2315, 0.2384, 0.2355, 0.0001};
    const std::vector<double> total = {0.5266, 0.5333, 0.2358, 0.0006};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(rep.main[i], main[i], 0.02) << i;
        EXPECT_NEAR(rep.total[i], total[i], 0.02) << i;
    }
}

TEST(Sobol, AdditiveModelHasNoInteractions) {
    auto f = [](const std::vector<double>& x) { return x[0] + x[1]; };
    const std::vector<SobolFeature> fs = {SobolFeature::quantitative("a", 0, 1), SobolFeature::quantitative("b", 0, 1)};
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto rep = sobol_indices(
            [&](const std::vector<std::vector<double>>& rows) {
                std::vector<double> out;
                for (const auto& r : rows) out.push_back(f(r));
                return out;
            },
            fs, 4096, seed);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_NEAR(rep.main[i], rep.total[i], 0.02);
            EXPECT_NEAR(rep.main[i], 0.5, 0.02);
            EXPECT_LE(std::abs(rep.main[i] - rep.total[i]), 2.0 * (rep.main_se[i] + rep.total_se[i]));
        }
    }
}

TEST(Sobol, IndexBoundsAndOrdering) {
    const auto rep = sobol_indices(batch(&Quadratic::f), Quadratic::features(), 2048, 5);
    const double tol = 0.03;
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        sum += rep.main[i];
        EXPECT_GE(rep.total[i], rep.main[i] - tol);
        EXPECT_GE(rep.main[i], -tol);
        EXPECT_LE(rep.total[i], 1 + tol);
    }
    EXPECT_LE(sum, 1 + tol);
}

TEST(Sobol, CategoricalFeature) {
    // y = level + x with level in {0, 1} uniform and x ~ U(0, 1): main(level) = 0.25 / (0.25 + 1/12).
    const std::vector<SobolFeature> fs = {SobolFeature::categorical("rot", 2), SobolFeature::quantitative("x", 0, 1)};
    const auto rep = sobol_indices(
        [](const std::vector<std::vector<double>>& rows) {
            std::vector<double> out;
            for (const auto& r : rows) {
                EXPECT_TRUE(r[0] == 0.0 || r[0] == 1.0);
                out.push_back(r[0] + r[1]);
            }
            return out;
        },
        fs, 4096, 3);
    EXPECT_NEAR(rep.main[0], 0.75, 0.02);
    EXPECT_NEAR(rep.total[0], 0.75, 0.02);
    EXPECT_NEAR(rep.main[1], 0.25, 0.02);
}

TEST(Sobol, IgnoredFeatureIsNegligible) {
    const std::vector<SobolFeature> fs = {SobolFeature::quantitative("a", 0, 1), SobolFeature::categorical("rot", 2)};
    const auto rep = sobol_indices(
        [](const std::vector<std::vector<double>>& rows) {
            std::vector<double> out;
            for (const auto& r : rows) out.push_back(std::sin(3 * r[0]));
            return out;
        },
        fs, 1024, 4);
    EXPECT_EQ(negligible_features(rep), std::vector<std::string>{"rot"});
}

TEST(Sobol, DeterministicGivenSeed) {
    const auto a = sobol_indices(batch(&Quadratic::f), Quadratic::features(), 512, 9);
    const auto b = sobol_indices(batch(&Quadratic::f), Quadratic::features(), 512, 9);
    EXPECT_EQ(a.main, b.main);
    EXPECT_EQ(a.total, b.total);
}

TEST(Sobol, ZeroVarianceIsRejected) {
    EXPECT_THROW(sobol_indices(
                     [](const std::vector<std::vector<double>>& rows) { return std::vector<double>(rows.size(), 2.0); },
                     Quadratic::features(), 256, 1),
                 DomainError);
}
