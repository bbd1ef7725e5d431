#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/records.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab::synthetic {

/// Coefficients of the default ground-truth family. Every term is a smooth
/// function of the process parameters, with z = ln(VED / ved_ref):
///
///   H   = h0 + h_amp tanh(h_slope z) + h_wave sin(h_freq pi p~) cos(h_freq pi v~)
///   P   = p_base + p_lof / (1 + e^{k (z - z_lof)}) + p_key / (1 + e^{-k (z - z_key)})
///   YS  = y0 + y_h H - y_p P
///   UTS = u_ratio YS + u0
///   EF  = e0 + e_amp exp(-((YS - e_peak) / e_width)^2) - e_p P
///
/// where p~ and v~ are power and speed rescaled to [0, 1] over the DOE box.
struct Family {
    double ved_ref = 80.0;
    double h0 = 330.0, h_amp = 90.0, h_slope = 1.0, h_wave = 25.0, h_freq = 2.0;
    double p_base = 0.002, p_lof = 0.03, p_key = 0.01, p_k = 3.0, z_lof = -1.0, z_key = 2.3;
    double y0 = 400.0, y_h = 1.9, y_p = 1000.0;
    double u_ratio = 1.08, u0 = 40.0;
    double e0 = 6.0, e_amp = 10.0, e_peak = 980.0, e_width = 160.0, e_p = 150.0;
    // Optional dependence on scan rotation (0 keeps the truth rotation-free).
    double h_rotation = 0.0;
};

struct Noise {
    double hardness = 8.0;    // HV
    double porosity = 5e-4;   // fraction
    double yield = 15.0;      // MPa, per replicate
    double ultimate = 15.0;   // MPa, per replicate
    double ductility = 0.8;   // %, per replicate
};

struct CampaignSpec {
    std::size_t n_cuboid = 270;
    std::size_t n_tensile = 54;
    bool subset = true;  // tensile parameter sets drawn from the cuboid sets
    std::uint64_t seed = 0;
    ParamRanges ranges;
    Family family;
    Noise noise;

    void validate() const {
        ranges.validate();
        if (n_cuboid == 0) throw DomainError("campaign: n_cuboid must be positive");
        if (subset && n_tensile > n_cuboid) throw DomainError("campaign: n_tensile exceeds n_cuboid with subset=true");
        const double sds[] = {noise.hardness, noise.porosity, noise.yield, noise.ultimate, noise.ductility};
        for (double s : sds) {
            if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError("campaign: noise levels must be finite and >= 0");
        }
    }
};

/// Noise-free responses anywhere in (and beyond) the parameter box.
class GroundTruth {
public:
    GroundTruth() = default;
    GroundTruth(Family f, ParamRanges r) : f_(f), r_(r) {}

    const Family& family() const { return f_; }
    const ParamRanges& ranges() const { return r_; }

    double hardness(const ProcessParams& p) const {
        const double z = std::log(compute_ved(p) / f_.ved_ref);
        const double pt = (p.power_w - r_.power_w.lo) / r_.power_w.width();
        const double vt = (p.speed_mm_s - r_.speed_mm_s.lo) / r_.speed_mm_s.width();
        const double rot = p.scan_rotation == ScanRotation::deg67 ? 1.0 : -1.0;
        return f_.h0 + f_.h_amp * std::tanh(f_.h_slope * z) +
               f_.h_wave * std::sin(f_.h_freq * std::numbers::pi * pt) * std::cos(f_.h_freq * std::numbers::pi * vt) + f_.h_rotation * rot;
    }

    double porosity(const ProcessParams& p) const {
        const double z = std::log(compute_ved(p) / f_.ved_ref);
        return f_.p_base + f_.p_lof / (1.0 + std::exp(f_.p_k * (z - f_.z_lof))) +
               f_.p_key / (1.0 + std::exp(-f_.p_k * (z - f_.z_key)));
    }

    double yield_strength(const ProcessParams& p) const {
        return f_.y0 + f_.y_h * hardness(p) - f_.y_p * porosity(p);
    }

    double ultimate_strength(const ProcessParams& p) const { return f_.u_ratio * yield_strength(p) + f_.u0; }

    double ductility(const ProcessParams& p) const {
        const double d = (yield_strength(p) - f_.e_peak) / f_.e_width;
        return f_.e0 + f_.e_amp * std::exp(-d * d) - f_.e_p * porosity(p);
    }

private:
    Family f_;
    ParamRanges r_;
};

struct Campaign {
    std::vector<CuboidRecord> cuboids;
    std::vector<TensileRecord> tensile;
    GroundTruth truth;
};

/// Deterministic given the spec. Cuboid designs come from the scrambled
/// Sobol DOE; every record draws its noise from its own derived stream, so
/// records are independent and stable under changes of n.
inline Campaign generate_campaign(const CampaignSpec& spec) {
    spec.validate();
    Campaign out;
    out.truth = GroundTruth(spec.family, spec.ranges);
    const auto& truth = out.truth;
    const auto design = generate_doe(spec.n_cuboid, spec.ranges, derive_seed(spec.seed, 1), {true});
    for (std::size_t i = 0; i < design.size(); ++i) {
        Rng rng(derive_seed(derive_seed(spec.seed, 2), i));
        const auto& p = design[i];
        double por = truth.porosity(p);
        if (spec.noise.porosity > 0) por += rng.normal(0.0, spec.noise.porosity);
        double hv = truth.hardness(p);
        if (spec.noise.hardness > 0) hv += rng.normal(0.0, spec.noise.hardness);
        out.cuboids.push_back({static_cast<long long>(i + 1), p, std::clamp(por, 0.0, 1.0), hv});
    }

    std::vector<ProcessParams> tensile_params;
    if (spec.subset) {
        std::vector<std::size_t> idx(design.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng pick(derive_seed(spec.seed, 3));
        pick.shuffle(std::span<std::size_t>(idx));
        idx.resize(spec.n_tensile);
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) tensile_params.push_back(design[i]);
    } else {
        tensile_params = generate_doe(std::max<std::size_t>(spec.n_tensile, 1), spec.ranges, derive_seed(spec.seed, 4), {true});
        tensile_params.resize(spec.n_tensile);
    }
    for (std::size_t i = 0; i < tensile_params.size(); ++i) {
        Rng rng(derive_seed(derive_seed(spec.seed, 5), i));
        const auto& p = tensile_params[i];
        std::array<TensileReplicate, 3> reps{};
        for (auto& r : reps) {
            r.yield_strength = truth.yield_strength(p) + (spec.noise.yield > 0 ? rng.normal(0.0, spec.noise.yield) : 0.0);
            r.ultimate_strength =
                truth.ultimate_strength(p) + (spec.noise.ultimate > 0 ? rng.normal(0.0, spec.noise.ultimate) : 0.0);
            r.ductility = truth.ductility(p) + (spec.noise.ductility > 0 ? rng.normal(0.0, spec.noise.ductility) : 0.0);
            r.ductility = std::max(r.ductility, 0.0);
            r.ultimate_strength = std::max(r.ultimate_strength, r.yield_strength);
        }
        auto median3 = [&](auto field) {
            std::array<double, 3> v{reps[0].*field, reps[1].*field, reps[2].*field};
            std::sort(v.begin(), v.end());
            return v[1];
        };
        TensileRecord rec;
        rec.id = static_cast<long long>(i + 1);
        rec.params = p;
        rec.yield_strength = median3(&TensileReplicate::yield_strength);
        rec.ultimate_strength = median3(&TensileReplicate::ultimate_strength);
        rec.ductility = median3(&TensileReplicate::ductility);
        rec.replicates = reps;
        out.tensile.push_back(rec);
    }
    return out;
}

// JSON form of a spec; unknown keys are rejected so typos do not pass silently.
inline nlohmann::json to_json(const CampaignSpec& s) {
    const auto& f = s.family;
    const auto& n = s.noise;
    auto iv = [](const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); };
    return {{"n_cuboid", s.n_cuboid},
            {"n_tensile", s.n_tensile},
            {"subset", s.subset},
            {"seed", s.seed},
            {"ranges",
             {{"power_w", iv(s.ranges.power_w)},
              {"speed_mm_s", iv(s.ranges.speed_mm_s)},
              {"layer_um", iv(s.ranges.layer_um)},
              {"hatch_um", iv(s.ranges.hatch_um)}}},
            {"family",
             {{"ved_ref", f.ved_ref}, {"h0", f.h0},         {"h_amp", f.h_amp},     {"h_slope", f.h_slope},
              {"h_wave", f.h_wave},   {"h_freq", f.h_freq},   {"p_base", f.p_base}, {"p_lof", f.p_lof},     {"p_key", f.p_key},
              {"p_k", f.p_k},         {"z_lof", f.z_lof},   {"z_key", f.z_key},     {"y0", f.y0},
              {"y_h", f.y_h},         {"y_p", f.y_p},       {"u_ratio", f.u_ratio}, {"u0", f.u0},
              {"e0", f.e0},           {"e_amp", f.e_amp},   {"e_peak", f.e_peak},   {"e_width", f.e_width},
              {"e_p", f.e_p},         {"h_rotation", f.h_rotation}}},
            {"noise",
             {{"hardness", n.hardness},
              {"porosity", n.porosity},
              {"yield", n.yield},
              {"ultimate", n.ultimate},
              {"ductility", n.ductility}}}};
}

inline CampaignSpec spec_from_json(const nlohmann::json& j) {
    CampaignSpec s;
    const auto defaults = to_json(s);
    auto check_keys = [](const nlohmann::json& obj, const nlohmann::json& ref, const std::string& where) {
        if (!obj.is_object()) throw DataError("campaign spec: '" + where + "' must be an object");
        for (const auto& [key, value] : obj.items()) {
            if (!ref.contains(key)) throw DataError("campaign spec: unknown key '" + where + key + "'");
        }
    };
    try {
        check_keys(j, defaults, "");
        auto merged = defaults;
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                check_keys(value, defaults[key], key + ".");
                for (const auto& [k2, v2] : value.items()) merged[key][k2] = v2;
            } else {
                merged[key] = value;
            }
        }
        s.n_cuboid = merged["n_cuboid"].get<std::size_t>();
        s.n_tensile = merged["n_tensile"].get<std::size_t>();
        s.subset = merged["subset"].get<bool>();
        s.seed = merged["seed"].get<std::uint64_t>();
        auto iv = [&](const char* k) {
            const auto& a = merged["ranges"][k];
            return Interval{a.at(0).get<double>(), a.at(1).get<double>()};
        };
        s.ranges.power_w = iv("power_w");
        s.ranges.speed_mm_s = iv("speed_mm_s");
        s.ranges.layer_um = iv("layer_um");
        s.ranges.hatch_um = iv("hatch_um");
        const auto& f = merged["family"];
        auto& F = s.family;
        for (auto [k, ptr] : std::initializer_list<std::pair<const char*, double*>>{
                 {"ved_ref", &F.ved_ref}, {"h0", &F.h0},       {"h_amp", &F.h_amp},     {"h_slope", &F.h_slope},
                 {"h_wave", &F.h_wave},   {"h_freq", &F.h_freq},   {"p_base", &F.p_base}, {"p_lof", &F.p_lof},   {"p_key", &F.p_key},
                 {"p_k", &F.p_k},         {"z_lof", &F.z_lof},   {"z_key", &F.z_key},   {"y0", &F.y0},
                 {"y_h", &F.y_h},         {"y_p", &F.y_p},       {"u_ratio", &F.u_ratio}, {"u0", &F.u0},
                 {"e0", &F.e0},           {"e_amp", &F.e_amp},   {"e_peak", &F.e_peak}, {"e_width", &F.e_width},
                 {"e_p", &F.e_p},         {"h_rotation", &F.h_rotation}}) {
            *ptr = f[k].get<double>();
        }
        const auto& n = merged["noise"];
        s.noise = {n["hardness"].get<double>(), n["porosity"].get<double>(), n["yield"].get<double>(),
                   n["ultimate"].get<double>(), n["ductility"].get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("campaign spec: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace fuselab::synthetic
