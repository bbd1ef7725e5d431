#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/sobol_sequence.hpp"

namespace fuselab::analysis {

/// A model input: quantitative over [lo, hi], or categorical with `levels`
/// levels passed to the model as the level index (0, 1, ...).
struct SobolFeature {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t levels = 0;  // 0 = quantitative

    static SobolFeature quantitative(std::string name, double lo, double hi) { return {std::move(name), lo, hi, 0}; }
    static SobolFeature categorical(std::string name, std::size_t levels) { return {std::move(name), 0, 0, levels}; }

    double from_unit(double u) const {
        if (levels == 0) return lo + u * (hi - lo);
        return static_cast<double>(std::min(levels - 1, static_cast<std::size_t>(u * static_cast<double>(levels))));
    }
};

// Evaluates the model on a batch of rows (one value per feature).
using BatchModel = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

struct SobolReport {
    std::vector<std::string> names;
    std::vector<double> main, total;
    std::vector<double> main_se, total_se;  // Monte-Carlo standard errors
    double variance = 0.0;
    std::size_t n_base = 0;
    std::uint64_t seed = 0;
};

/// Main effects by the Saltelli pairing estimator and total effects by the
/// Jansen estimator, on matrices A, B taken from one scrambled Sobol
/// sequence of dimension 2d. Costs n_base * (d + 2) model evaluations.
inline SobolReport sobol_indices(const BatchModel& model, const std::vector<SobolFeature>& features,
                                 std::size_t n_base, std::uint64_t seed) {
    const std::size_t d = features.size();
    if (d == 0) throw DomainError("sobol_indices: no features");
    if (2 * d > SobolSequence::kMaxDimensions) throw DomainError("sobol_indices: too many features");
    if (n_base < 2) throw DomainError("sobol_indices: n_base must be at least 2");
    for (const auto& f : features) {
        if (f.levels == 0 && !(f.lo < f.hi)) throw DomainError("sobol_indices: empty range for '" + f.name + "'");
        if (f.levels == 1) throw DomainError("sobol_indices: categorical '" + f.name + "' needs two or more levels");
    }
    SobolSequence seq(2 * d, true, seed);
    std::vector<std::vector<double>> a(n_base, std::vector<double>(d)), b = a;
    std::vector<double> u(2 * d);
    for (std::size_t j = 0; j < n_base; ++j) {
        seq.fill(j + 1, u.data());  // skip the first point, which sits on a cell corner before scrambling
        for (std::size_t k = 0; k < d; ++k) {
            a[j][k] = features[k].from_unit(u[k]);
            b[j][k] = features[k].from_unit(u[d + k]);
        }
    }
    auto eval = [&](const std::vector<std::vector<double>>& rows) {
        auto out = model(rows);
        if (out.size() != rows.size()) throw DomainError("sobol_indices: model returned the wrong number of values");
        for (double v : out) {
            if (!std::isfinite(v)) throw NumericError("sobol_indices: model returned a non-finite value");
        }
        return out;
    };
    const auto fa = eval(a);
    const auto fb = eval(b);
    const double nb = static_cast<double>(n_base);
    double mean = 0.0;
    for (std::size_t j = 0; j < n_base; ++j) mean += fa[j] + fb[j];
    mean /= 2 * nb;
    double var = 0.0;
    for (std::size_t j = 0; j < n_base; ++j) var += (fa[j] - mean) * (fa[j] - mean) + (fb[j] - mean) * (fb[j] - mean);
    var /= 2 * nb;
    if (!(var > 1e-300)) throw DomainError("sobol_indices: model output has zero variance");

    SobolReport rep;
    rep.variance = var;
    rep.n_base = n_base;
    rep.seed = seed;
    for (std::size_t i = 0; i < d; ++i) {
        auto ab = a;
        for (std::size_t j = 0; j < n_base; ++j) ab[j][i] = b[j][i];
        const auto fab = eval(ab);
        double s1 = 0, s1_sq = 0, st = 0, st_sq = 0;
        for (std::size_t j = 0; j < n_base; ++j) {
            const double m = fb[j] * (fab[j] - fa[j]);
            const double t = 0.5 * (fa[j] - fab[j]) * (fa[j] - fab[j]);
            s1 += m;
            s1_sq += m * m;
            st += t;
            st_sq += t * t;
        }
        s1 /= nb;
        st /= nb;
        const double se1 = std::sqrt(std::max(0.0, s1_sq / nb - s1 * s1) / nb);
        const double set = std::sqrt(std::max(0.0, st_sq / nb - st * st) / nb);
        rep.names.push_back(features[i].name);
        rep.main.push_back(s1 / var);
        rep.total.push_back(st / var);
        rep.main_se.push_back(se1 / var);
        rep.total_se.push_back(set / var);
    }
    return rep;
}

// Features whose main and total indices are both below the threshold.
inline std::vector<std::string> negligible_features(const SobolReport& r, double threshold = 0.05) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        if (r.main[i] < threshold && r.total[i] < threshold) out.push_back(r.names[i]);
    }
    return out;
}

// The process-parameter space as Sobol features, scan rotation optional.
inline std::vector<SobolFeature> process_features(const ParamRanges& r, bool rotation) {
    std::vector<SobolFeature> f = {SobolFeature::quantitative("power_w", r.power_w.lo, r.power_w.hi),
                                   SobolFeature::quantitative("speed_mm_s", r.speed_mm_s.lo, r.speed_mm_s.hi),
                                   SobolFeature::quantitative("layer_um", r.layer_um.lo, r.layer_um.hi),
                                   SobolFeature::quantitative("hatch_um", r.hatch_um.lo, r.hatch_um.hi)};
    if (rotation) f.push_back(SobolFeature::categorical("scan_rot", 2));
    return f;
}

inline ProcessParams params_from_features(const std::vector<double>& row, bool rotation) {
    const ScanRotation rot =
        rotation ? (row.at(4) < 0.5 ? ScanRotation::deg67 : ScanRotation::deg90) : ScanRotation::deg90;
    return ProcessParams::from_micrometres(row.at(0), row.at(1), row.at(2), row.at(3), rot);
}

}  // namespace fuselab::analysis
