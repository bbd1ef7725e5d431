#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fuselab/errors.hpp"
#include "fuselab/gp/model.hpp"

namespace fuselab::gp {

inline constexpr const char* kGpModelVersion = "gpmodel_v1";

inline nlohmann::json schema_to_json(const MixedSchema& s) {
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : s.categorical) cats.push_back({{"name", c.name}, {"levels", c.levels}});
    return {{"quantitative", s.quantitative}, {"categorical", cats}};
}

inline MixedSchema schema_from_json(const nlohmann::json& j) {
    MixedSchema s;
    s.quantitative = j.at("quantitative").get<std::vector<std::string>>();
    for (const auto& c : j.at("categorical")) {
        s.categorical.push_back({c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>()});
    }
    return s;
}

inline nlohmann::json mean_to_json(const MeanFunction& m) {
    const bool ffnn = m.kind() == MeanFunction::Kind::ffnn;
    std::vector<double> params(m.params().data(), m.params().data() + m.params().size());
    return {{"kind", ffnn ? "ffnn" : "constant"},
            {"hidden", m.hidden()},
            {"dropout", m.dropout()},
            {"source_dependent", m.source_dependent()},
            {"x_dim", m.x_dim()},
            {"h_dim", m.h_dim()},
            {"params", params}};
}

inline MeanFunction mean_from_json(const nlohmann::json& j) {
    const auto params = j.at("params").get<std::vector<double>>();
    MeanFunction m = MeanFunction::constant();
    if (j.at("kind").get<std::string>() == "ffnn") {
        m = MeanFunction::ffnn(j.at("x_dim").get<std::size_t>(), j.at("h_dim").get<std::size_t>(),
                               j.at("hidden").get<std::vector<std::size_t>>(), j.at("dropout").get<double>(),
                               j.at("source_dependent").get<bool>());
    }
    m.set_params(Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size())));
    return m;
}

/// Single self-contained document: schema, standardization constants,
/// parameters and training data. Loading refactorizes the covariance.
inline nlohmann::json to_json(const GpModel& model) {
    const auto& p = model.parameters();
    const auto& st = model.standardization();
    const auto& data = model.training_data();
    std::vector<std::vector<double>> mapping;
    for (Eigen::Index a = 0; a < p.mapping.rows(); ++a) {
        std::vector<double> row;
        for (Eigen::Index b = 0; b < p.mapping.cols(); ++b) row.push_back(p.mapping(a, b));
        mapping.push_back(row);
    }
    std::vector<std::vector<double>> xq;
    std::vector<std::vector<int>> xc;
    for (const auto& u : data.inputs) {
        xq.push_back(u.quantitative);
        xc.push_back(u.categorical);
    }
    nlohmann::json j;
    j["version"] = kGpModelVersion;
    j["schema"] = schema_to_json(data.schema);
    j["source_column"] = data.source_column ? nlohmann::json(*data.source_column) : nlohmann::json(nullptr);
    j["standardization"] = {{"input_center", st.input_center},
                            {"input_scale", st.input_scale},
                            {"output_center", st.output_center},
                            {"output_scale", st.output_scale}};
    j["omega"] = p.omega;
    j["latent_dim"] = p.mapping.cols();
    j["mapping"] = mapping;
    j["process_variance"] = p.process_variance;
    j["nugget"] = p.nugget;
    j["nugget_floor"] = model.nugget_floor();
    j["mean"] = mean_to_json(p.mean);
    j["training"] = {{"quantitative", xq}, {"categorical", xc}, {"response", data.response}};
    j["diagnostics"] = {{"map_loss", model.diagnostics().map_loss},
                        {"starts_attempted", model.diagnostics().starts_attempted},
                        {"starts_succeeded", model.diagnostics().starts_succeeded},
                        {"best_start", model.diagnostics().best_start}};
    return j;
}

inline GpModel gp_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<std::string>() != kGpModelVersion) {
            throw DataError("unsupported GP model version: " + j.at("version").get<std::string>());
        }
        MixedDataset data;
        data.schema = schema_from_json(j.at("schema"));
        if (!j.at("source_column").is_null()) data.source_column = j.at("source_column").get<std::size_t>();
        const auto& tr = j.at("training");
        const auto xq = tr.at("quantitative").get<std::vector<std::vector<double>>>();
        const auto xc = tr.at("categorical").get<std::vector<std::vector<int>>>();
        data.response = tr.at("response").get<std::vector<double>>();
        if (xq.size() != xc.size() || xq.size() != data.response.size()) throw DataError("GP model: ragged training data");
        for (std::size_t i = 0; i < xq.size(); ++i) data.inputs.push_back({xq[i], xc[i]});

        Standardization st;
        const auto& js = j.at("standardization");
        st.input_center = js.at("input_center").get<std::vector<double>>();
        st.input_scale = js.at("input_scale").get<std::vector<double>>();
        st.output_center = js.at("output_center").get<std::vector<double>>();
        st.output_scale = js.at("output_scale").get<std::vector<double>>();

        HyperParameters p;
        p.omega = j.at("omega").get<std::vector<double>>();
        const auto rows = j.at("mapping").get<std::vector<std::vector<double>>>();
        const auto latent = j.at("latent_dim").get<Eigen::Index>();
        p.mapping.resize(static_cast<Eigen::Index>(rows.size()), latent);
        for (std::size_t a = 0; a < rows.size(); ++a) {
            if (static_cast<Eigen::Index>(rows[a].size()) != latent) throw DataError("GP model: ragged mapping matrix");
            for (Eigen::Index b = 0; b < latent; ++b) p.mapping(static_cast<Eigen::Index>(a), b) = rows[a][static_cast<std::size_t>(b)];
        }
        p.process_variance = j.at("process_variance").get<double>();
        p.nugget = j.at("nugget").get<double>();
        p.mean = mean_from_json(j.at("mean"));
        FitDiagnostics diag;
        if (j.contains("diagnostics")) {
            const auto& d = j.at("diagnostics");
            if (!d.at("map_loss").is_null()) diag.map_loss = d.at("map_loss").get<double>();
            diag.starts_attempted = d.at("starts_attempted").get<int>();
            diag.starts_succeeded = d.at("starts_succeeded").get<int>();
            diag.best_start = d.at("best_start").get<int>();
        }
        return GpModel(std::move(data), std::move(st), std::move(p), j.at("nugget_floor").get<double>(), diag);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed GP model document: ") + e.what());
    }
}

}  // namespace fuselab::gp
