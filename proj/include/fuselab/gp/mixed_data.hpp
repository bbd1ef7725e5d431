#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab::gp {

struct CategoricalVariable {
    std::string name;
    std::vector<std::string> levels;

    std::size_t cardinality() const { return levels.size(); }
    friend bool operator==(const CategoricalVariable&, const CategoricalVariable&) = default;
};

/// Column layout shared by every row of a dataset and by a fitted model.
struct MixedSchema {
    std::vector<std::string> quantitative;
    std::vector<CategoricalVariable> categorical;

    std::size_t quantitative_dim() const { return quantitative.size(); }
    std::size_t categorical_dim() const { return categorical.size(); }

    std::size_t total_levels() const {
        std::size_t n = 0;
        for (const auto& c : categorical) n += c.cardinality();
        return n;
    }

    std::optional<std::size_t> categorical_index(const std::string& name) const {
        for (std::size_t i = 0; i < categorical.size(); ++i) {
            if (categorical[i].name == name) return i;
        }
        return std::nullopt;
    }

    friend bool operator==(const MixedSchema&, const MixedSchema&) = default;
};

/// One input: quantitative values in natural units plus level indices.
struct MixedInput {
    std::vector<double> quantitative;
    std::vector<int> categorical;

    friend bool operator==(const MixedInput&, const MixedInput&) = default;
};

inline void check_input(const MixedSchema& schema, const MixedInput& u) {
    if (u.quantitative.size() != schema.quantitative_dim() || u.categorical.size() != schema.categorical_dim()) {
        throw DomainError("input does not match schema: expected " + std::to_string(schema.quantitative_dim()) +
                          " quantitative and " + std::to_string(schema.categorical_dim()) +
                          " categorical values, got " + std::to_string(u.quantitative.size()) + " and " +
                          std::to_string(u.categorical.size()));
    }
    for (std::size_t i = 0; i < u.categorical.size(); ++i) {
        const int level = u.categorical[i];
        if (level < 0 || static_cast<std::size_t>(level) >= schema.categorical[i].cardinality()) {
            throw DomainError("level index " + std::to_string(level) + " out of range for categorical '" +
                              schema.categorical[i].name + "' with " +
                              std::to_string(schema.categorical[i].cardinality()) + " levels");
        }
    }
}

/// Tabular records with one response column. `source_column`, when set,
/// names the categorical that tags the data source of each row.
struct MixedDataset {
    MixedSchema schema;
    std::vector<MixedInput> inputs;
    std::vector<double> response;
    std::optional<std::size_t> source_column;

    std::size_t size() const { return inputs.size(); }

    void add(MixedInput u, double y) {
        inputs.push_back(std::move(u));
        response.push_back(y);
    }

    void validate() const {
        if (inputs.size() != response.size()) throw DomainError("dataset: input/response count mismatch");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            check_input(schema, inputs[i]);
            for (double v : inputs[i].quantitative) {
                if (!std::isfinite(v)) throw DomainError("dataset: non-finite input in row " + std::to_string(i));
            }
            if (!std::isfinite(response[i])) {
                throw DomainError("dataset: non-finite response in row " + std::to_string(i));
            }
        }
        if (source_column && *source_column >= schema.categorical_dim()) {
            throw DomainError("dataset: source column index out of range");
        }
    }

    MixedDataset subset(std::span<const std::size_t> rows) const {
        MixedDataset out{schema, {}, {}, source_column};
        out.inputs.reserve(rows.size());
        out.response.reserve(rows.size());
        for (auto r : rows) out.add(inputs.at(r), response.at(r));
        return out;
    }

    friend bool operator==(const MixedDataset&, const MixedDataset&) = default;
};

}  // namespace fuselab::gp
