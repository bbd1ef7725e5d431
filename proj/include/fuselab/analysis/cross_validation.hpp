#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuselab/analysis/metrics.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/gp/model.hpp"
#include "fuselab/hierarchy.hpp"
#include "fuselab/util/parallel.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab::analysis {

// Seeded shuffle, then row order[i] goes to fold i % k: sizes differ by at most one.
inline std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DomainError("k-fold: k must be at least 2");
    if (n < k) throw DomainError("k-fold: need at least k rows (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % k;
    return fold;
}

struct FoldResult {
    std::size_t size = 0;
    bool failed = false;
    std::string error;
    double metric = std::nan("");          // on the standardized output scale
    double metric_natural = std::nan("");  // in response units
};

struct CvReport {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    bool squared = false;
    std::vector<FoldResult> folds;
    std::vector<std::size_t> fold_of;
    std::vector<double> predictions;  // out-of-fold means, NaN for rows of failed folds
    double r_squared = std::nan("");
    std::optional<double> noise_variance;  // nugget of a full-data fit
};

/// Per-fold fits with the held-out metric on each fold; R^2 from the pooled
/// out-of-fold predictions. A failing fold is recorded, not thrown.
inline CvReport kfold_cv(const gp::MixedDataset& data, std::size_t k, const gp::FitConfig& config, std::uint64_t seed,
                         bool squared = false, bool with_noise_estimate = true) {
    data.validate();
    CvReport rep;
    rep.k = k;
    rep.seed = seed;
    rep.squared = squared;
    rep.fold_of = assign_folds(data.size(), k, seed);
    rep.folds.resize(k);
    rep.predictions.assign(data.size(), std::nan(""));

    double mean = 0.0;
    for (double y : data.response) mean += y;
    mean /= static_cast<double>(data.size());
    double ss = 0.0;
    for (double y : data.response) ss += (y - mean) * (y - mean);
    double scale = std::sqrt(ss / static_cast<double>(data.size()));
    if (!(scale > 0.0)) scale = 1.0;

    std::vector<std::vector<std::size_t>> rows(k);
    for (std::size_t i = 0; i < data.size(); ++i) rows[rep.fold_of[i]].push_back(i);
    gp::FitConfig inner = config;
    inner.jobs = 1;
    parallel_for(k, config.jobs, [&](std::size_t f) {
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (rep.fold_of[i] != f) train.push_back(i);
        }
        auto& fr = rep.folds[f];
        fr.size = rows[f].size();
        try {
            const auto model = gp::GpModel::fit(data.subset(train), inner, derive_seed(seed, 100 + f));
            const auto test = data.subset(rows[f]);
            const auto pred = model.predict(test.inputs);
            std::vector<double> ys, ps;
            for (std::size_t j = 0; j < rows[f].size(); ++j) {
                rep.predictions[rows[f][j]] = pred.mean[j];
                ys.push_back(test.response[j] / scale);
                ps.push_back(pred.mean[j] / scale);
            }
            fr.metric = prediction_error(ys, ps, squared);
            fr.metric_natural = prediction_error(test.response, pred.mean, squared);
        } catch (const Error& e) {
            fr.failed = true;
            fr.error = e.what();
        }
    });
    std::vector<double> y, p;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::isnan(rep.predictions[i])) continue;
        y.push_back(data.response[i]);
        p.push_back(rep.predictions[i]);
    }
    if (y.size() >= 2) {
        try {
            rep.r_squared = r_squared(y, p);
        } catch (const DomainError&) {
        }
    }
    if (with_noise_estimate) {
        try {
            rep.noise_variance = gp::GpModel::fit(data, config, derive_seed(seed, 99)).nugget();
        } catch (const NumericError&) {
        }
    }
    return rep;
}

/// Noise-variance baseline: the fitted nugget on the standardized scale.
inline double estimate_noise_variance(const gp::MixedDataset& data, const gp::FitConfig& config, std::uint64_t seed) {
    if (data.size() < 2) throw DomainError("estimate_noise_variance: at least two rows required");
    return gp::GpModel::fit(data, config, seed).nugget();
}

inline nlohmann::json to_json(const CvReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json j = {{"size", f.size}, {"failed", f.failed}};
        if (f.failed) {
            j["error"] = f.error;
        } else {
            j["prediction_error"] = f.metric;
            j["prediction_error_natural"] = f.metric_natural;
        }
        folds.push_back(j);
    }
    nlohmann::json j = {{"k", r.k},
                        {"seed", r.seed},
                        {"metric", r.squared ? "mse" : "root_mean_square"},
                        {"folds", folds},
                        {"r_squared", std::isnan(r.r_squared) ? nlohmann::json(nullptr) : nlohmann::json(r.r_squared)}};
    j["noise_variance"] = r.noise_variance ? nlohmann::json(*r.noise_variance) : nlohmann::json(nullptr);
    return j;
}

// Cuboid folds by shuffle; a tensile row follows the cuboid with identical
// process parameters so held-out settings are unseen by every stage.
struct CampaignFolds {
    std::vector<std::size_t> cuboid;
    std::vector<std::size_t> tensile;
};

inline CampaignFolds assign_campaign_folds(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                           std::size_t k, std::uint64_t seed) {
    CampaignFolds f;
    f.cuboid = assign_folds(cuboids.size(), k, seed);
    const auto spare = assign_folds(std::max(tensile.size(), k), k, derive_seed(seed, 1));
    for (std::size_t t = 0; t < tensile.size(); ++t) {
        std::optional<std::size_t> match;
        for (std::size_t c = 0; c < cuboids.size() && !match; ++c) {
            if (cuboids[c].params == tensile[t].params) match = f.cuboid[c];
        }
        f.tensile.push_back(match ? *match : spare[t]);
    }
    return f;
}

template <class Rec>
std::vector<Rec> select(std::span<const Rec> recs, const std::vector<std::size_t>& fold, std::size_t f, bool keep) {
    std::vector<Rec> out;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if ((fold[i] == f) == keep) out.push_back(recs[i]);
    }
    return out;
}

struct HierarchyCvReport {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<bool> fold_failed;
    std::vector<std::string> fold_errors;
    std::vector<double> hardness_pred, ys_pred, ef_pred;  // out-of-fold
    double r2_hardness = std::nan(""), r2_ys = std::nan(""), r2_ef = std::nan("");
    std::vector<double> fold_metric_hardness, fold_metric_ys, fold_metric_ef;
};

/// End-to-end k-fold check of the four-stage pipeline.
inline HierarchyCvReport hierarchy_cv(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                      const HierarchyConfig& config, std::size_t k, std::uint64_t seed, int jobs = 1) {
    HierarchyCvReport rep;
    rep.k = k;
    rep.seed = seed;
    const auto folds = assign_campaign_folds(cuboids, tensile, k, seed);
    rep.hardness_pred.assign(cuboids.size(), std::nan(""));
    rep.ys_pred.assign(tensile.size(), std::nan(""));
    rep.ef_pred.assign(tensile.size(), std::nan(""));
    rep.fold_failed.assign(k, false);
    rep.fold_errors.assign(k, "");
    rep.fold_metric_hardness.assign(k, std::nan(""));
    rep.fold_metric_ys.assign(k, std::nan(""));
    rep.fold_metric_ef.assign(k, std::nan(""));
    HierarchyConfig inner = config;
    inner.fit.jobs = 1;
    parallel_for(k, jobs, [&](std::size_t f) {
        try {
            const auto c_train = select(cuboids, folds.cuboid, f, false);
            const auto t_train = select(tensile, folds.tensile, f, false);
            const auto pipe = train_hierarchy(c_train, t_train, inner, derive_seed(seed, 200 + f));
            std::vector<ProcessParams> cp, tp;
            std::vector<std::size_t> ci, ti;
            for (std::size_t i = 0; i < cuboids.size(); ++i) {
                if (folds.cuboid[i] == f) {
                    cp.push_back(cuboids[i].params);
                    ci.push_back(i);
                }
            }
            for (std::size_t i = 0; i < tensile.size(); ++i) {
                if (folds.tensile[i] == f) {
                    tp.push_back(tensile[i].params);
                    ti.push_back(i);
                }
            }
            const auto hc = pipe.predict_tensile(cp);
            std::vector<double> y, p;
            for (std::size_t j = 0; j < ci.size(); ++j) {
                rep.hardness_pred[ci[j]] = hc[j].hardness;
                y.push_back(cuboids[ci[j]].hardness);
                p.push_back(hc[j].hardness);
            }
            if (!y.empty()) rep.fold_metric_hardness[f] = prediction_error(y, p);
            const auto pt = pipe.predict_tensile(tp);
            std::vector<double> ys, ps, ye, pe;
            for (std::size_t j = 0; j < ti.size(); ++j) {
                rep.ys_pred[ti[j]] = pt[j].ys_mean;
                rep.ef_pred[ti[j]] = pt[j].ef_mean;
                ys.push_back(tensile[ti[j]].yield_strength);
                ps.push_back(pt[j].ys_mean);
                ye.push_back(tensile[ti[j]].ductility);
                pe.push_back(pt[j].ef_mean);
            }
            if (!ys.empty()) {
                rep.fold_metric_ys[f] = prediction_error(ys, ps);
                rep.fold_metric_ef[f] = prediction_error(ye, pe);
            }
        } catch (const Error& e) {
            rep.fold_failed[f] = true;
            rep.fold_errors[f] = e.what();
        }
    });
    auto pooled_r2 = [](auto measured, const std::vector<double>& pred, std::size_t n) {
        std::vector<double> y, p;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::isnan(pred[i])) continue;
            y.push_back(measured(i));
            p.push_back(pred[i]);
        }
        if (y.size() < 2) return std::nan("");
        return r_squared(y, p);
    };
    rep.r2_hardness = pooled_r2([&](std::size_t i) { return cuboids[i].hardness; }, rep.hardness_pred, cuboids.size());
    rep.r2_ys = pooled_r2([&](std::size_t i) { return tensile[i].yield_strength; }, rep.ys_pred, tensile.size());
    rep.r2_ef = pooled_r2([&](std::size_t i) { return tensile[i].ductility; }, rep.ef_pred, tensile.size());
    return rep;
}

struct FusionComparison {
    double fused = std::nan("");    // held-out metric of the fused yield stage
    double unfused = std::nan("");  // held-out metric of a yield-only GP on process parameters
    std::size_t n_test = 0;
};

/// Holds out fold `fold` of k (cuboids and tensile rows alike), trains the
/// chain up to the fused yield stage and a tensile-only GP, and scores both
/// on the held-out tensile rows.
inline FusionComparison compare_fusion(std::span<const CuboidRecord> cuboids, std::span<const TensileRecord> tensile,
                                       const HierarchyConfig& config, std::size_t k, std::size_t fold,
                                       std::uint64_t seed) {
    using namespace hierarchy;
    const auto folds = assign_campaign_folds(cuboids, tensile, k, seed);
    const auto c_train = select(cuboids, folds.cuboid, fold, false);
    const auto t_train = select(tensile, folds.tensile, fold, false);
    const auto t_test = select(tensile, folds.tensile, fold, true);
    const bool rot = config.include_scan_rotation;
    const auto gp_h = fit_stage(Stage::hardness, hardness_dataset(c_train, rot), stage_config(config, config.h_mean), seed);
    const auto gp_ep =
        fit_stage(Stage::engineered_porosity, ep_dataset(c_train, gp_h, rot), stage_config(config, config.ep_mean), seed);
    const auto gp_ys = fit_stage(Stage::yield_strength, ys_dataset(c_train, t_train, gp_h, gp_ep, rot),
                                 stage_config(config, config.ys_mean), seed);

    gp::MixedDataset solo;
    solo.schema = base_schema(rot);
    for (const auto& t : t_train) solo.add(base_input(t.params, rot), t.yield_strength);
    const auto gp_solo = fit_stage(Stage::yield_strength, solo, stage_config(config, gp::MeanConfig::constant()), seed);

    const auto tp = params_of(std::span<const TensileRecord>(t_test));
    const auto up = predict_upstream(gp_h, gp_ep, tp, rot);
    std::vector<gp::MixedInput> fused_in;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        fused_in.push_back(tagged(with(base_input(tp[i], rot), {up.hardness[i], up.ep[i]}), 1));
    }
    const auto pf = gp_ys.predict(fused_in).mean;
    const auto ps = gp_solo.predict(base_inputs(tp, rot)).mean;
    std::vector<double> y;
    for (const auto& t : t_test) y.push_back(t.yield_strength);
    FusionComparison out;
    out.n_test = y.size();
    if (!y.empty()) {
        out.fused = prediction_error(y, pf);
        out.unfused = prediction_error(y, ps);
    }
    return out;
}

}  // namespace fuselab::analysis
