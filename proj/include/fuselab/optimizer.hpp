#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/hierarchy.hpp"
#include "fuselab/util/parallel.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab {

/// Screening thresholds; an empty optional disables that bound.
struct ScreenFilters {
    std::optional<double> ved_min = 100.0;  // J/mm^3, inclusive
    std::optional<double> ved_max = 200.0;
    std::optional<double> ys_min = 1000.0;  // MPa, strict
    std::optional<double> ef_min = 12.0;    // %, strict
};

struct Candidate {
    std::size_t index = 0;  // sample order
    ProcessParams params;
    double ved = 0.0;
    double ys = 0.0, ys_sd = 0.0;
    double ef = 0.0, ef_sd = 0.0;
    bool pass_ved = true, pass_ys = true, pass_ef = true;
    double objective = std::nan("");  // log(ys) + log(ef), undefined unless both positive

    bool passed() const { return pass_ved && pass_ys && pass_ef; }
};

struct CandidateSet {
    std::vector<Candidate> candidates;
    ScreenFilters filters;
    ParamRanges ranges;
    std::uint64_t seed = 0;
    bool low_discrepancy = true;
    // Output scales used to make yield and ductility sds commensurate.
    double ys_scale = 1.0;
    double ef_scale = 1.0;

    std::size_t passed_count() const {
        return static_cast<std::size_t>(std::count_if(candidates.begin(), candidates.end(),
                                                      [](const Candidate& c) { return c.passed(); }));
    }
};

inline double log_objective(double ys, double ef) {
    return ys > 0.0 && ef > 0.0 ? std::log(ys) + std::log(ef) : std::nan("");
}

inline void apply_filters(Candidate& c, const ScreenFilters& f) {
    c.pass_ved = (!f.ved_min || c.ved >= *f.ved_min) && (!f.ved_max || c.ved <= *f.ved_max);
    c.pass_ys = !f.ys_min || c.ys > *f.ys_min;
    c.pass_ef = !f.ef_min || c.ef > *f.ef_min;
}

inline std::vector<ProcessParams> sample_params(std::size_t n, const ParamRanges& ranges, std::uint64_t seed,
                                                bool low_discrepancy) {
    if (low_discrepancy) return generate_doe(n, ranges, seed, {true});
    ranges.validate();
    Rng rng(seed);
    std::vector<ProcessParams> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 5> u{};
        for (auto& x : u) x = rng.uniform();
        out.push_back(params_from_unit(u, ranges));
    }
    return out;
}

// Predicts in contiguous blocks; block results land in sample order.
inline std::vector<TensilePrediction> predict_blocks(const HierarchyPipeline& pipe, const std::vector<ProcessParams>& p,
                                                     int jobs) {
    std::vector<TensilePrediction> out(p.size());
    const std::size_t block = 512;
    const std::size_t blocks = (p.size() + block - 1) / block;
    parallel_for(blocks, jobs, [&](std::size_t b) {
        const std::size_t lo = b * block;
        const std::size_t hi = std::min(p.size(), lo + block);
        const auto part = pipe.predict_tensile(std::span<const ProcessParams>(p.data() + lo, hi - lo));
        std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
    });
    return out;
}

/// Samples n settings, predicts yield strength and ductility through the
/// pipeline and flags each filter. An empty pass set is a valid outcome.
inline CandidateSet screen(const HierarchyPipeline& pipe, std::size_t n, const ParamRanges& ranges,
                           const ScreenFilters& filters, std::uint64_t seed, bool low_discrepancy = true,
                           int jobs = 1) {
    if (n == 0) throw DomainError("screen: n must be at least 1");
    CandidateSet set;
    set.filters = filters;
    set.ranges = ranges;
    set.seed = seed;
    set.low_discrepancy = low_discrepancy;
    const auto& ys_model = pipe.stage(Stage::yield_strength);
    const auto& ef_model = pipe.stage(Stage::ductility);
    set.ys_scale = ys_model.standardization().output_scale.back();
    set.ef_scale = ef_model.standardization().output_scale.back();
    const auto params = sample_params(n, ranges, seed, low_discrepancy);
    const auto pred = predict_blocks(pipe, params, jobs);
    set.candidates.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = set.candidates[i];
        c.index = i;
        c.params = params[i];
        c.ved = compute_ved(params[i]);
        c.ys = pred[i].ys_mean;
        c.ys_sd = pred[i].ys_sd;
        c.ef = pred[i].ef_mean;
        c.ef_sd = pred[i].ef_sd;
        c.objective = log_objective(c.ys, c.ef);
        apply_filters(c, filters);
    }
    return set;
}

enum class RankMode { ys, ef, combined };

inline RankMode rank_mode_from_name(const std::string& s) {
    if (s == "ys") return RankMode::ys;
    if (s == "ef") return RankMode::ef;
    if (s == "combined") return RankMode::combined;
    throw DomainError("unknown ranking mode '" + s + "' (expected ys, ef or combined)");
}

inline double uncertainty(const Candidate& c, RankMode mode, double ys_scale, double ef_scale) {
    switch (mode) {
        case RankMode::ys: return c.ys_sd;
        case RankMode::ef: return c.ef_sd;
        case RankMode::combined: return std::hypot(c.ys_sd / ys_scale, c.ef_sd / ef_scale);
    }
    return 0.0;
}

/// Passed candidates in ascending uncertainty; ties keep sample order.
inline std::vector<Candidate> rank_by_uncertainty(const CandidateSet& set, RankMode mode) {
    std::vector<Candidate> passed;
    for (const auto& c : set.candidates) {
        if (c.passed()) passed.push_back(c);
    }
    if (passed.empty()) throw DomainError("rank_by_uncertainty: no candidate passed the filters");
    std::stable_sort(passed.begin(), passed.end(), [&](const Candidate& a, const Candidate& b) {
        return uncertainty(a, mode, set.ys_scale, set.ef_scale) < uncertainty(b, mode, set.ys_scale, set.ef_scale);
    });
    return passed;
}

enum class Param { power, speed, layer, hatch };

inline Param param_from_name(const std::string& s) {
    if (s == "power" || s == "power_w") return Param::power;
    if (s == "speed" || s == "speed_mm_s") return Param::speed;
    if (s == "layer" || s == "layer_um") return Param::layer;
    if (s == "hatch" || s == "hatch_um") return Param::hatch;
    throw DomainError("unknown process parameter '" + s + "' (expected power_w, speed_mm_s, layer_um or hatch_um)");
}

inline const char* param_name(Param p) {
    switch (p) {
        case Param::power: return "power_w";
        case Param::speed: return "speed_mm_s";
        case Param::layer: return "layer_um";
        case Param::hatch: return "hatch_um";
    }
    return "?";
}

inline const Interval& param_range(const ParamRanges& r, Param p) {
    switch (p) {
        case Param::power: return r.power_w;
        case Param::speed: return r.speed_mm_s;
        case Param::layer: return r.layer_um;
        case Param::hatch: return r.hatch_um;
    }
    return r.power_w;
}

// Natural-unit values (W, mm/s, um, um) in the order power, speed, layer, hatch.
inline ProcessParams params_from_values(const std::array<double, 4>& v, ScanRotation rot) {
    return ProcessParams::from_micrometres(v[0], v[1], v[2], v[3], rot);
}

struct IsoLine {
    double level = 0.0;
    std::vector<std::pair<double, double>> points;  // (x, y) on the map axes
};

struct DesignMap {
    Param x_axis = Param::power, y_axis = Param::speed;
    std::vector<double> x, y;
    std::array<double, 4> fixed{};  // values of the non-free parameters; free slots unused
    ScanRotation rotation = ScanRotation::deg90;
    // Row-major over (x index, y index).
    std::vector<double> ys, ys_sd, ef, ef_sd, objective, ved;
    std::vector<IsoLine> iso;

    std::size_t cell(std::size_t i, std::size_t j) const { return i * y.size() + j; }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = i + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return v;
}

// Solves VED(x, y, fixed) = level for y at the given x. VED is proportional
// to power and inversely proportional to each of the other three.
inline double iso_solve(Param x_axis, Param y_axis, double x, const std::array<double, 4>& fixed, double level) {
    std::array<double, 4> v = fixed;
    v[static_cast<std::size_t>(x_axis)] = x;
    v[static_cast<std::size_t>(y_axis)] = 1.0;
    const double ved_at_one = v[0] / (v[1] * (v[2] / 1000.0) * (v[3] / 1000.0));
    return y_axis == Param::power ? level / ved_at_one : ved_at_one / level;
}

/// Rectilinear grid of predictions over two free parameters, with the
/// other two (and the scan rotation) held fixed.
inline DesignMap design_map(const HierarchyPipeline& pipe, Param x_axis, Param y_axis,
                            const std::map<std::string, double>& fixed, std::size_t res_x, std::size_t res_y,
                            const ParamRanges& ranges = {}, ScanRotation rotation = ScanRotation::deg90,
                            std::vector<double> iso_levels = {100.0, 200.0}, int jobs = 1) {
    if (x_axis == y_axis) throw DomainError("design_map: the two free parameters must differ");
    if (res_x < 2 || res_y < 2) throw DomainError("design_map: resolution must be at least 2 per axis");
    DesignMap m;
    m.x_axis = x_axis;
    m.y_axis = y_axis;
    m.rotation = rotation;
    std::array<bool, 4> have{};
    for (const auto& [name, value] : fixed) {
        const Param p = param_from_name(name);
        if (p == x_axis || p == y_axis) throw DomainError("design_map: '" + name + "' is free and fixed at once");
        if (!param_range(ranges, p).contains(value)) {
            throw DomainError("design_map: fixed " + std::string(param_name(p)) + "=" + format_double(value) +
                              " outside its range");
        }
        m.fixed[static_cast<std::size_t>(p)] = value;
        have[static_cast<std::size_t>(p)] = true;
    }
    for (Param p : {Param::power, Param::speed, Param::layer, Param::hatch}) {
        if (p != x_axis && p != y_axis && !have[static_cast<std::size_t>(p)]) {
            throw DomainError("design_map: no fixed value for " + std::string(param_name(p)));
        }
    }
    m.x = linspace(param_range(ranges, x_axis).lo, param_range(ranges, x_axis).hi, res_x);
    m.y = linspace(param_range(ranges, y_axis).lo, param_range(ranges, y_axis).hi, res_y);
    std::vector<ProcessParams> grid;
    grid.reserve(res_x * res_y);
    for (double xv : m.x) {
        for (double yv : m.y) {
            auto v = m.fixed;
            v[static_cast<std::size_t>(x_axis)] = xv;
            v[static_cast<std::size_t>(y_axis)] = yv;
            grid.push_back(params_from_values(v, rotation));
        }
    }
    const auto pred = predict_blocks(pipe, grid, jobs);
    for (std::size_t c = 0; c < grid.size(); ++c) {
        m.ys.push_back(pred[c].ys_mean);
        m.ys_sd.push_back(pred[c].ys_sd);
        m.ef.push_back(pred[c].ef_mean);
        m.ef_sd.push_back(pred[c].ef_sd);
        m.objective.push_back(log_objective(pred[c].ys_mean, pred[c].ef_mean));
        m.ved.push_back(compute_ved(grid[c]));
    }
    const auto& yr = param_range(ranges, y_axis);
    for (double level : iso_levels) {
        IsoLine line{level, {}};
        for (double xv : linspace(param_range(ranges, x_axis).lo, param_range(ranges, x_axis).hi, std::max<std::size_t>(res_x, 64))) {
            const double yv = iso_solve(x_axis, y_axis, xv, m.fixed, level);
            if (yr.contains(yv)) line.points.emplace_back(xv, yv);
        }
        m.iso.push_back(std::move(line));
    }
    return m;
}

}  // namespace fuselab
