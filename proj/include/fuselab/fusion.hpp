#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fuselab/errors.hpp"
#include "fuselab/gp/mixed_data.hpp"

namespace fuselab {

// EP = H * exp(P): stretches tiny porosity differences by the hardness scale.
inline double engineered_porosity(double hardness, double porosity) {
    if (!(porosity >= 0.0 && porosity <= 1.0)) {
        throw DomainError("engineered_porosity: porosity must lie in [0, 1], got " + std::to_string(porosity));
    }
    return hardness * std::exp(porosity);
}

inline constexpr const char* kSourceColumn = "source";

/// Concatenates datasets that share a schema and appends a categorical
/// source column with one level per tag. Rows keep dataset order, then
/// their original order.
inline gp::MixedDataset fuse(const std::vector<std::pair<std::string, gp::MixedDataset>>& datasets) {
    if (datasets.size() < 2) throw DomainError("fuse: at least two datasets required");
    std::set<std::string> tags;
    for (const auto& [tag, d] : datasets) {
        if (tag.empty()) throw DomainError("fuse: empty source tag");
        if (!tags.insert(tag).second) throw DomainError("fuse: duplicate source tag '" + tag + "'");
    }
    const auto& ref = datasets.front().second.schema;
    for (std::size_t s = 1; s < datasets.size(); ++s) {
        const auto& sch = datasets[s].second.schema;
        std::string diff;
        const std::size_t nq = std::max(ref.quantitative.size(), sch.quantitative.size());
        for (std::size_t k = 0; k < nq; ++k) {
            const std::string a = k < ref.quantitative.size() ? ref.quantitative[k] : "<none>";
            const std::string b = k < sch.quantitative.size() ? sch.quantitative[k] : "<none>";
            if (a != b) diff += " quantitative[" + std::to_string(k) + "]: " + a + " vs " + b + ";";
        }
        const std::size_t nc = std::max(ref.categorical.size(), sch.categorical.size());
        for (std::size_t k = 0; k < nc; ++k) {
            if (k >= ref.categorical.size() || k >= sch.categorical.size() || !(ref.categorical[k] == sch.categorical[k])) {
                const std::string a = k < ref.categorical.size() ? ref.categorical[k].name : "<none>";
                const std::string b = k < sch.categorical.size() ? sch.categorical[k].name : "<none>";
                diff += " categorical[" + std::to_string(k) + "]: " + a + " vs " + b + ";";
            }
        }
        if (!diff.empty()) {
            throw DomainError("fuse: schema of '" + datasets[s].first + "' conflicts with '" + datasets.front().first +
                              "':" + diff);
        }
    }
    if (ref.categorical_index(kSourceColumn)) throw DomainError("fuse: inputs already carry a source column");

    gp::MixedDataset out;
    out.schema = ref;
    gp::CategoricalVariable source{kSourceColumn, {}};
    for (const auto& [tag, d] : datasets) source.levels.push_back(tag);
    out.schema.categorical.push_back(source);
    out.source_column = out.schema.categorical.size() - 1;
    for (std::size_t s = 0; s < datasets.size(); ++s) {
        const auto& d = datasets[s].second;
        d.validate();
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto u = d.inputs[i];
            u.categorical.push_back(static_cast<int>(s));
            out.add(std::move(u), d.response[i]);
        }
    }
    return out;
}

// Inverse of fuse for one tag: the rows of that source without the column.
inline gp::MixedDataset unfuse(const gp::MixedDataset& fused, const std::string& tag) {
    if (!fused.source_column) throw DomainError("unfuse: dataset has no source column");
    const std::size_t col = *fused.source_column;
    const auto& levels = fused.schema.categorical[col].levels;
    const auto it = std::find(levels.begin(), levels.end(), tag);
    if (it == levels.end()) throw DomainError("unfuse: unknown source tag '" + tag + "'");
    const int level = static_cast<int>(it - levels.begin());
    gp::MixedDataset out;
    out.schema = fused.schema;
    out.schema.categorical.erase(out.schema.categorical.begin() + static_cast<std::ptrdiff_t>(col));
    for (std::size_t i = 0; i < fused.size(); ++i) {
        if (fused.inputs[i].categorical[col] != level) continue;
        auto u = fused.inputs[i];
        u.categorical.erase(u.categorical.begin() + static_cast<std::ptrdiff_t>(col));
        out.add(std::move(u), fused.response[i]);
    }
    return out;
}

}  // namespace fuselab
