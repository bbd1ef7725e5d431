#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fuselab/optimizer.hpp"
#include "fuselab/synthetic.hpp"

using namespace fuselab;

namespace {

const HierarchyPipeline& small_pipeline() {
    static const HierarchyPipeline pipe = [] {
        synthetic::CampaignSpec spec;
        spec.n_cuboid = 60;
        spec.n_tensile = 16;
        spec.seed = 3;
        const auto c = synthetic::generate_campaign(spec);
        HierarchyConfig cfg;
        cfg.fit.n_starts = 1;
        cfg.fit.max_iterations = 60;
        cfg.fit.dropout_refine_steps = 10;
        return train_hierarchy(c.cuboids, c.tensile, cfg, 3);
    }();
    return pipe;
}

Candidate make(std::size_t index, double ys_sd, double ef_sd) {
    Candidate c;
    c.index = index;
    c.ys_sd = ys_sd;
    c.ef_sd = ef_sd;
    return c;
}

ScreenFilters loose() {
    ScreenFilters f;
    f.ys_min = 900.0;
    f.ef_min = 6.0;
    return f;
}

}  // namespace

TEST(Screen, InfiniteThresholdGivesEmptyPassSet) {
    ScreenFilters f;
    f.ys_min = std::numeric_limits<double>::infinity();
    const auto set = screen(small_pipeline(), 200, {}, f, 1);
    EXPECT_EQ(set.candidates.size(), 200u);
    EXPECT_EQ(set.passed_count(), 0u);
    EXPECT_THROW(rank_by_uncertainty(set, RankMode::combined), DomainError);
}

TEST(Screen, DisablingVedFilterGivesSuperset) {
    auto f = loose();
    const auto with = screen(small_pipeline(), 500, {}, f, 2);
    f.ved_min.reset();
    f.ved_max.reset();
    const auto without = screen(small_pipeline(), 500, {}, f, 2);
    ASSERT_GT(with.passed_count(), 0u);
    EXPECT_GE(without.passed_count(), with.passed_count());
    for (std::size_t i = 0; i < 500; ++i) {
        if (with.candidates[i].passed()) {
            EXPECT_TRUE(without.candidates[i].passed());
        }
    }
}

TEST(Screen, PassCountMonotoneInThresholds) {
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double ys : {800.0, 900.0, 950.0, 1000.0, 1050.0, 1100.0}) {
        auto f = loose();
        f.ys_min = ys;
        const auto n = screen(small_pipeline(), 400, {}, f, 4).passed_count();
        EXPECT_LE(n, prev);
        prev = n;
    }
    prev = std::numeric_limits<std::size_t>::max();
    for (double ef : {4.0, 8.0, 10.0, 12.0, 14.0}) {
        auto f = loose();
        f.ef_min = ef;
        const auto n = screen(small_pipeline(), 400, {}, f, 4).passed_count();
        EXPECT_LE(n, prev);
        prev = n;
    }
}

TEST(Screen, PassedCandidatesSatisfyRecordedThresholds) {
    const auto set = screen(small_pipeline(), 1000, {}, loose(), 5);
    const auto& f = set.filters;
    for (const auto& c : set.candidates) {
        const bool ok = c.ved >= *f.ved_min && c.ved <= *f.ved_max && c.ys > *f.ys_min && c.ef > *f.ef_min;
        EXPECT_EQ(c.passed(), ok);
        EXPECT_EQ(c.ved, compute_ved(c.params));
        if (c.ys > 0 && c.ef > 0) {
            EXPECT_DOUBLE_EQ(c.objective, std::log(c.ys) + std::log(c.ef));
        }
    }
}

TEST(Screen, ReproduciblePerSeed) {
    const auto a = screen(small_pipeline(), 300, {}, loose(), 6);
    const auto b = screen(small_pipeline(), 300, {}, loose(), 6, true, 3);
    const auto c = screen(small_pipeline(), 300, {}, loose(), 7);
    bool differs = false;
    for (std::size_t i = 0; i < 300; ++i) {
        EXPECT_EQ(a.candidates[i].params, b.candidates[i].params);
        EXPECT_EQ(a.candidates[i].ys, b.candidates[i].ys);
        EXPECT_EQ(a.candidates[i].ef_sd, b.candidates[i].ef_sd);
        differs = differs || !(a.candidates[i].params == c.candidates[i].params);
    }
    EXPECT_TRUE(differs);
}

TEST(Screen, UniformSamplingStaysInRanges) {
    const ParamRanges r;
    const auto set = screen(small_pipeline(), 300, r, loose(), 8, false);
    for (const auto& c : set.candidates) EXPECT_TRUE(r.contains(c.params));
    EXPECT_THROW(screen(small_pipeline(), 0, r, loose(), 8), DomainError);
}

TEST(RankByUncertainty, SmallerSdsRankFirst) {
    CandidateSet set;
    set.candidates = {make(0, 2, 2), make(1, 1, 1)};
    for (auto mode : {RankMode::ys, RankMode::ef, RankMode::combined}) {
        const auto r = rank_by_uncertainty(set, mode);
        ASSERT_EQ(r.size(), 2u);
        EXPECT_EQ(r[0].index, 1u);
    }
}

TEST(RankByUncertainty, CombinedEqualsYsWhenDuctilitySdsTie) {
    CandidateSet set;
    set.ys_scale = 40.0;
    set.ef_scale = 2.0;
    std::mt19937 gen(1);
    std::uniform_real_distribution<double> u(0.5, 30.0);
    for (std::size_t i = 0; i < 200; ++i) set.candidates.push_back(make(i, u(gen), 0.7));
    const auto a = rank_by_uncertainty(set, RankMode::combined);
    const auto b = rank_by_uncertainty(set, RankMode::ys);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].index, b[i].index);
}

TEST(RankByUncertainty, AgreesWithSortOracle) {
    CandidateSet set;
    set.ys_scale = 35.0;
    set.ef_scale = 1.7;
    std::mt19937 gen(7);
    std::uniform_int_distribution<int> coarse(1, 20);  // coarse values force ties
    std::bernoulli_distribution fail(0.2);
    for (std::size_t i = 0; i < 1000; ++i) {
        auto c = make(i, coarse(gen), coarse(gen) / 10.0);
        c.pass_ef = !fail(gen);
        set.candidates.push_back(c);
    }
    for (auto mode : {RankMode::ys, RankMode::ef, RankMode::combined}) {
        std::vector<std::pair<double, std::size_t>> oracle;
        for (const auto& c : set.candidates) {
            if (!c.pass_ef) continue;
            double key = mode == RankMode::ys ? c.ys_sd : mode == RankMode::ef ? c.ef_sd
                         : std::sqrt(c.ys_sd * c.ys_sd / (35.0 * 35.0) + c.ef_sd * c.ef_sd / (1.7 * 1.7));
            oracle.emplace_back(key, c.index);
        }
        std::sort(oracle.begin(), oracle.end());
        const auto r = rank_by_uncertainty(set, mode);
        ASSERT_EQ(r.size(), oracle.size());
        for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i].index, oracle[i].second) << i;
    }
}

TEST(RankByUncertainty, ModeNames) {
    EXPECT_EQ(rank_mode_from_name("ef"), RankMode::ef);
    EXPECT_THROW(rank_mode_from_name("sum"), DomainError);
}

TEST(DesignMap, TwoByTwoGrid) {
    const auto m = design_map(small_pipeline(), Param::power, Param::speed, {{"layer_um", 20}, {"hatch_um", 77}}, 2, 2);
    EXPECT_EQ(m.ys.size(), 4u);
    EXPECT_EQ(m.objective.size(), 4u);
    EXPECT_EQ(m.x, (std::vector<double>{80, 400}));
    EXPECT_EQ(m.y, (std::vector<double>{150, 1500}));
}

TEST(DesignMap, AxesStrictlyMonotoneAndObjectiveFinite) {
    const auto m = design_map(small_pipeline(), Param::power, Param::speed, {{"layer_um", 20}, {"hatch_um", 77}}, 15, 11);
    for (std::size_t i = 1; i < m.x.size(); ++i) EXPECT_GT(m.x[i], m.x[i - 1]);
    for (std::size_t j = 1; j < m.y.size(); ++j) EXPECT_GT(m.y[j], m.y[j - 1]);
    for (std::size_t k = 0; k < m.ys.size(); ++k) {
        if (m.ys[k] > 0 && m.ef[k] > 0) {
            EXPECT_TRUE(std::isfinite(m.objective[k]));
        }
    }
    EXPECT_TRUE(std::isnan(log_objective(1000.0, -0.5)));
    EXPECT_TRUE(std::isnan(log_objective(0.0, 3.0)));
}

TEST(DesignMap, IsoLinesSitOnTheirLevel) {
    const std::map<std::string, double> fixed{{"layer_um", 20}, {"hatch_um", 77}};
    for (auto [x, y] : {std::pair{Param::power, Param::speed}, std::pair{Param::speed, Param::power}}) {
        const auto m = design_map(small_pipeline(), x, y, fixed, 5, 5);
        ASSERT_EQ(m.iso.size(), 2u);
        for (const auto& line : m.iso) {
            ASSERT_FALSE(line.points.empty());
            for (auto [px, py] : line.points) {
                std::array<double, 4> v = m.fixed;
                v[static_cast<std::size_t>(x)] = px;
                v[static_cast<std::size_t>(y)] = py;
                EXPECT_NEAR(compute_ved(params_from_values(v, ScanRotation::deg90)), line.level, 1e-9);
            }
        }
    }
    const auto lh = design_map(small_pipeline(), Param::layer, Param::hatch, {{"power", 200}, {"speed", 800}}, 3, 3);
    for (const auto& line : lh.iso) {
        for (auto [px, py] : line.points) {
            EXPECT_NEAR(compute_ved(ProcessParams::from_micrometres(200, 800, px, py, ScanRotation::deg90)), line.level, 1e-9);
        }
    }
}

TEST(DesignMap, TransposingAxesTransposesGrid) {
    const std::map<std::string, double> fixed{{"layer_um", 20}, {"hatch_um", 77}};
    const auto a = design_map(small_pipeline(), Param::power, Param::speed, fixed, 6, 4);
    const auto b = design_map(small_pipeline(), Param::speed, Param::power, fixed, 4, 6);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(a.objective[a.cell(i, j)], b.objective[b.cell(j, i)]);
        }
    }
}

TEST(DesignMap, Preconditions) {
    const std::map<std::string, double> fixed{{"layer_um", 20}, {"hatch_um", 77}};
    EXPECT_THROW(design_map(small_pipeline(), Param::power, Param::speed, fixed, 1, 5), DomainError);
    EXPECT_THROW(design_map(small_pipeline(), Param::power, Param::power, fixed, 3, 3), DomainError);
    EXPECT_THROW(design_map(small_pipeline(), Param::power, Param::speed, {{"layer_um", 10}, {"hatch_um", 77}}, 3, 3),
                 DomainError);
    EXPECT_THROW(design_map(small_pipeline(), Param::power, Param::speed, {{"layer_um", 20}}, 3, 3), DomainError);
    EXPECT_THROW(design_map(small_pipeline(), Param::power, Param::speed, {{"power", 200}, {"layer_um", 20}, {"hatch_um", 77}}, 3, 3),
                 DomainError);
    EXPECT_THROW(param_from_name("laser"), DomainError);
}
