#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/fusion.hpp"
#include "fuselab/gp/model.hpp"
#include "fuselab/gp/serialization.hpp"
#include "fuselab/records.hpp"

namespace fuselab {

enum class Stage { hardness, engineered_porosity, yield_strength, ductility };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::hardness: return "h";
        case Stage::engineered_porosity: return "ep";
        case Stage::yield_strength: return "ys";
        case Stage::ductility: return "ef";
    }
    return "?";
}

inline Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::hardness, Stage::engineered_porosity, Stage::yield_strength, Stage::ductility}) {
        if (name == stage_name(s)) return s;
    }
    throw DomainError("unknown stage '" + name + "' (expected h, ep, ys or ef)");
}

struct HierarchyConfig {
    gp::FitConfig fit;  // optimizer and prior settings shared by all stages
    bool include_scan_rotation = false;
    gp::MeanConfig h_mean = gp::MeanConfig::constant();
    gp::MeanConfig ep_mean = gp::MeanConfig::constant();
    gp::MeanConfig ys_mean = gp::MeanConfig::ffnn({2, 2, 2}, 0.2, true);
    gp::MeanConfig ef_mean = gp::MeanConfig::ffnn({2, 2}, 0.2, true);
};

// Which features feed a stage and which sources it fuses.
struct StageWiring {
    std::string stage;
    std::string response;
    std::vector<std::string> quantitative;
    std::vector<std::string> sources;
};

namespace hierarchy {

inline constexpr const char* kTagHardness = "H";
inline constexpr const char* kTagYield = "YS";
inline constexpr const char* kTagDuctility = "EF";

inline std::vector<std::string> param_columns() { return {"power_w", "speed_mm_s", "layer_um", "hatch_um"}; }

inline gp::MixedSchema base_schema(bool rotation) {
    gp::MixedSchema s;
    s.quantitative = param_columns();
    if (rotation) s.categorical.push_back({"scan_rot", {"67", "90"}});
    return s;
}

inline gp::MixedInput base_input(const ProcessParams& p, bool rotation) {
    gp::MixedInput u;
    u.quantitative = {p.power_w, p.speed_mm_s, p.layer_um(), p.hatch_um()};
    if (rotation) u.categorical.push_back(level_index(p.scan_rotation));
    return u;
}

inline gp::MixedInput with(gp::MixedInput u, std::initializer_list<double> extra) {
    u.quantitative.insert(u.quantitative.end(), extra);
    return u;
}

inline gp::MixedInput tagged(gp::MixedInput u, int level) {
    u.categorical.push_back(level);
    return u;
}

inline gp::MixedDataset hardness_dataset(std::span<const CuboidRecord> cuboids, bool rotation) {
    gp::MixedDataset d;
    d.schema = base_schema(rotation);
    for (const auto& r : cuboids) d.add(base_input(r.params, rotation), r.hardness);
    return d;
}

inline std::vector<gp::MixedInput> base_inputs(std::span<const ProcessParams> params, bool rotation) {
    std::vector<gp::MixedInput> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(base_input(p, rotation));
    return out;
}

// Upstream predictions for a batch of parameter sets.
struct Upstream {
    std::vector<double> hardness, hardness_var;
    std::vector<double> ep, ep_var;
};

inline Upstream predict_upstream(const gp::GpModel& gp_h, const gp::GpModel& gp_ep, std::span<const ProcessParams> params,
                                 bool rotation) {
    Upstream up;
    const auto base = base_inputs(params, rotation);
    auto ph = gp_h.predict(base);
    up.hardness = std::move(ph.mean);
    up.hardness_var = std::move(ph.variance);
    std::vector<gp::MixedInput> ep_in;
    ep_in.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) ep_in.push_back(with(base[i], {up.hardness[i]}));
    auto pe = gp_ep.predict(ep_in);
    up.ep = std::move(pe.mean);
    up.ep_var = std::move(pe.variance);
    return up;
}

inline std::vector<ProcessParams> params_of(std::span<const CuboidRecord> r) {
    std::vector<ProcessParams> out;
    for (const auto& x : r) out.push_back(x.params);
    return out;
}

inline std::vector<ProcessParams> params_of(std::span<const TensileRecord> r) {
    std::vector<ProcessParams> out;
    for (const auto& x : r) out.push_back(x.params);
    return out;
}

// GP_EP training set: (params, predicted hardness) -> predicted hardness * exp(measured porosity).
inline gp::MixedDataset ep_dataset(std::span<const CuboidRecord> cuboids, const gp::GpModel& gp_h, bool rotation) {
    gp::MixedDataset d;
    d.schema = base_schema(rotation);
    d.schema.quantitative.push_back("hardness_hat");
    const auto base = base_inputs(params_of(cuboids), rotation);
    const auto h = gp_h.predict(base).mean;
    for (std::size_t i = 0; i < cuboids.size(); ++i) {
        d.add(with(base[i], {h[i]}), engineered_porosity(h[i], cuboids[i].porosity));
    }
    return d;
}

inline gp::MixedSchema augmented_schema(bool rotation, bool with_ys) {
    auto s = base_schema(rotation);
    s.quantitative.push_back("hardness_hat");
    s.quantitative.push_back("ep_hat");
    if (with_ys) s.quantitative.push_back("ys_hat");
    return s;
}

// Fused yield stage: cuboid rows carry hardness as a dummy response (tag H),
// tensile rows carry yield strength (tag YS). Inputs use predicted features only.
inline gp::MixedDataset ys_dataset(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                   const gp::GpModel& gp_h, const gp::GpModel& gp_ep, bool rotation) {
    gp::MixedDataset hd, yd;
    hd.schema = yd.schema = augmented_schema(rotation, false);
    const auto cp = params_of(cuboids);
    const auto tp = params_of(tensile);
    const auto uc = predict_upstream(gp_h, gp_ep, cp, rotation);
    const auto ut = predict_upstream(gp_h, gp_ep, tp, rotation);
    for (std::size_t i = 0; i < cp.size(); ++i) {
        hd.add(with(base_input(cp[i], rotation), {uc.hardness[i], uc.ep[i]}), cuboids[i].hardness);
    }
    for (std::size_t i = 0; i < tp.size(); ++i) {
        yd.add(with(base_input(tp[i], rotation), {ut.hardness[i], ut.ep[i]}), tensile[i].yield_strength);
    }
    return fuse({{kTagHardness, std::move(hd)}, {kTagYield, std::move(yd)}});
}

inline gp::MixedDataset ef_dataset(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                   const gp::GpModel& gp_h, const gp::GpModel& gp_ep, const gp::GpModel& gp_ys,
                                   bool rotation) {
    gp::MixedDataset hd, ed;
    hd.schema = ed.schema = augmented_schema(rotation, true);
    auto add_rows = [&](std::span<const ProcessParams> params, auto response, gp::MixedDataset& into) {
        const auto up = predict_upstream(gp_h, gp_ep, params, rotation);
        std::vector<gp::MixedInput> ys_in;
        for (std::size_t i = 0; i < params.size(); ++i) {
            ys_in.push_back(tagged(with(base_input(params[i], rotation), {up.hardness[i], up.ep[i]}), 1));
        }
        const auto ys = gp_ys.predict(ys_in).mean;
        for (std::size_t i = 0; i < params.size(); ++i) {
            into.add(with(base_input(params[i], rotation), {up.hardness[i], up.ep[i], ys[i]}), response(i));
        }
    };
    add_rows(params_of(cuboids), [&](std::size_t i) { return cuboids[i].hardness; }, hd);
    add_rows(params_of(tensile), [&](std::size_t i) { return tensile[i].ductility; }, ed);
    return fuse({{kTagHardness, std::move(hd)}, {kTagDuctility, std::move(ed)}});
}

inline gp::FitConfig stage_config(const HierarchyConfig& c, const gp::MeanConfig& mean) {
    gp::FitConfig f = c.fit;
    f.mean = mean;
    return f;
}

inline gp::GpModel fit_stage(Stage stage, const gp::MixedDataset& data, const gp::FitConfig& config,
                             std::uint64_t seed) {
    try {
        return gp::GpModel::fit(data, config, derive_seed(seed, 10 + static_cast<std::uint64_t>(stage)));
    } catch (const NumericError& e) {
        throw TrainingError(std::string("stage ") + stage_name(stage) + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(std::string("stage ") + stage_name(stage) + ": " + e.what());
    }
}

}  // namespace hierarchy

struct TensilePrediction {
    double ys_mean = 0.0, ys_sd = 0.0;
    double ef_mean = 0.0, ef_sd = 0.0;
    double hardness = 0.0, hardness_sd = 0.0;
    double ep = 0.0, ep_sd = 0.0;
};

// A fused stage's prediction for the hardness source. The dummy response is
// an auxiliary of training and carries no physical meaning.
struct DummyPrediction {
    double mean = 0.0;
    double sd = 0.0;
    bool non_physical = true;
};

/// Trained four-stage chain H -> EP -> YS -> EF. Immutable. The only entry
/// point is a process-parameter batch, so downstream stages can only ever
/// see predicted upstream features.
class HierarchyPipeline {
public:
    HierarchyPipeline(gp::GpModel h, gp::GpModel ep, gp::GpModel ys, gp::GpModel ef, bool include_scan_rotation)
        : h_(std::move(h)), ep_(std::move(ep)), ys_(std::move(ys)), ef_(std::move(ef)), rotation_(include_scan_rotation) {
        check();
    }

    bool include_scan_rotation() const { return rotation_; }

    const gp::GpModel& stage(Stage s) const {
        switch (s) {
            case Stage::hardness: return h_;
            case Stage::engineered_porosity: return ep_;
            case Stage::yield_strength: return ys_;
            case Stage::ductility: return ef_;
        }
        return h_;
    }

    std::vector<StageWiring> wiring() const {
        auto cols = [](const gp::GpModel& m) { return m.schema().quantitative; };
        auto tags = [](const gp::GpModel& m) {
            return m.source_column() ? m.schema().categorical[*m.source_column()].levels : std::vector<std::string>{};
        };
        return {{"h", "hardness_hv", cols(h_), tags(h_)},
                {"ep", "engineered_porosity", cols(ep_), tags(ep_)},
                {"ys", "ys_mpa", cols(ys_), tags(ys_)},
                {"ef", "ef_pct", cols(ef_), tags(ef_)}};
    }

    std::vector<TensilePrediction> predict_tensile(std::span<const ProcessParams> params) const {
        std::vector<TensilePrediction> out(params.size());
        if (params.empty()) return out;
        const auto up = hierarchy::predict_upstream(h_, ep_, params, rotation_);
        std::vector<gp::MixedInput> ys_in, ef_in;
        for (std::size_t i = 0; i < params.size(); ++i) {
            ys_in.push_back(hierarchy::tagged(
                hierarchy::with(hierarchy::base_input(params[i], rotation_), {up.hardness[i], up.ep[i]}), 1));
        }
        const auto ys = ys_.predict(ys_in);
        for (std::size_t i = 0; i < params.size(); ++i) {
            ef_in.push_back(hierarchy::tagged(hierarchy::with(hierarchy::base_input(params[i], rotation_),
                                                              {up.hardness[i], up.ep[i], ys.mean[i]}),
                                              1));
        }
        const auto ef = ef_.predict(ef_in);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& o = out[i];
            o.hardness = up.hardness[i];
            o.hardness_sd = std::sqrt(up.hardness_var[i]);
            o.ep = up.ep[i];
            o.ep_sd = std::sqrt(up.ep_var[i]);
            o.ys_mean = ys.mean[i];
            o.ys_sd = std::sqrt(ys.variance[i]);
            o.ef_mean = ef.mean[i];
            o.ef_sd = std::sqrt(ef.variance[i]);
        }
        return out;
    }

    // Point prediction of one stage as a function of the process parameters.
    std::vector<double> predict_stage(Stage s, std::span<const ProcessParams> params) const {
        const auto pred = predict_tensile(params);
        std::vector<double> out;
        out.reserve(pred.size());
        for (const auto& p : pred) {
            switch (s) {
                case Stage::hardness: out.push_back(p.hardness); break;
                case Stage::engineered_porosity: out.push_back(p.ep); break;
                case Stage::yield_strength: out.push_back(p.ys_mean); break;
                case Stage::ductility: out.push_back(p.ef_mean); break;
            }
        }
        return out;
    }

    /// Hardness-source output of a fused stage (ys or ef).
    std::vector<DummyPrediction> predict_dummy(Stage s, std::span<const ProcessParams> params) const {
        if (s != Stage::yield_strength && s != Stage::ductility) {
            throw DomainError("predict_dummy: only the fused stages ys and ef carry a dummy response");
        }
        std::vector<DummyPrediction> out;
        if (params.empty()) return out;
        const auto up = hierarchy::predict_upstream(h_, ep_, params, rotation_);
        std::vector<gp::MixedInput> in;
        if (s == Stage::yield_strength) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                in.push_back(hierarchy::tagged(
                    hierarchy::with(hierarchy::base_input(params[i], rotation_), {up.hardness[i], up.ep[i]}), 0));
            }
        } else {
            const auto t = predict_tensile(params);
            for (std::size_t i = 0; i < params.size(); ++i) {
                in.push_back(hierarchy::tagged(hierarchy::with(hierarchy::base_input(params[i], rotation_),
                                                               {up.hardness[i], up.ep[i], t[i].ys_mean}),
                                               0));
            }
        }
        const auto pred = stage(s).predict(in);
        for (std::size_t i = 0; i < params.size(); ++i) out.push_back({pred.mean[i], std::sqrt(pred.variance[i]), true});
        return out;
    }

private:
    void check() const {
        const auto w = wiring();
        const auto expect = [&](std::size_t idx, std::size_t quantitative, bool fused) {
            const auto& m = stage(static_cast<Stage>(idx));
            if (m.schema().quantitative.size() != quantitative || m.source_column().has_value() != fused ||
                (m.schema().categorical_index("scan_rot").has_value() != rotation_)) {
                throw DataError(std::string("pipeline: stage ") + stage_name(static_cast<Stage>(idx)) +
                                " does not have the expected wiring");
            }
        };
        expect(0, 4, false);
        expect(1, 5, false);
        expect(2, 6, true);
        expect(3, 7, true);
    }

    gp::GpModel h_, ep_, ys_, ef_;
    bool rotation_;
};

/// Trains the stages in order; each stage sees only the predictions of the
/// stages before it.
inline HierarchyPipeline train_hierarchy(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                         const HierarchyConfig& config, std::uint64_t seed) {
    using namespace hierarchy;
    if (cuboids.size() < 2) throw DomainError("train_hierarchy: at least two cuboid records required");
    const bool rot = config.include_scan_rotation;
    auto gp_h = fit_stage(Stage::hardness, hardness_dataset(cuboids, rot), stage_config(config, config.h_mean), seed);
    auto gp_ep = fit_stage(Stage::engineered_porosity, ep_dataset(cuboids, gp_h, rot),
                           stage_config(config, config.ep_mean), seed);
    if (tensile.size() < 2) {
        throw DomainError("train_hierarchy: stages ys and ef need at least two tensile records (fused source missing)");
    }
    auto gp_ys = fit_stage(Stage::yield_strength, ys_dataset(cuboids, tensile, gp_h, gp_ep, rot),
                           stage_config(config, config.ys_mean), seed);
    auto gp_ef = fit_stage(Stage::ductility, ef_dataset(cuboids, tensile, gp_h, gp_ep, gp_ys, rot),
                           stage_config(config, config.ef_mean), seed);
    return HierarchyPipeline(std::move(gp_h), std::move(gp_ep), std::move(gp_ys), std::move(gp_ef), rot);
}

inline constexpr const char* kPipelineVersion = "pipeline_v1";

inline nlohmann::json to_json(const HierarchyPipeline& p) {
    nlohmann::json wiring = nlohmann::json::array();
    for (const auto& w : p.wiring()) {
        wiring.push_back({{"stage", w.stage}, {"response", w.response}, {"inputs", w.quantitative}, {"sources", w.sources}});
    }
    return {{"version", kPipelineVersion},
            {"include_scan_rotation", p.include_scan_rotation()},
            {"wiring", wiring},
            {"stages",
             {{"h", gp::to_json(p.stage(Stage::hardness))},
              {"ep", gp::to_json(p.stage(Stage::engineered_porosity))},
              {"ys", gp::to_json(p.stage(Stage::yield_strength))},
              {"ef", gp::to_json(p.stage(Stage::ductility))}}}};
}

inline HierarchyPipeline pipeline_from_json(const nlohmann::json& j) {
    try {
        const auto version = j.at("version").get<std::string>();
        if (version != kPipelineVersion) throw DataError("unsupported pipeline version: " + version);
        const auto& s = j.at("stages");
        return HierarchyPipeline(gp::gp_model_from_json(s.at("h")), gp::gp_model_from_json(s.at("ep")),
                                 gp::gp_model_from_json(s.at("ys")), gp::gp_model_from_json(s.at("ef")),
                                 j.at("include_scan_rotation").get<bool>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed pipeline document: ") + e.what());
    }
}

}  // namespace fuselab
