#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fuselab/errors.hpp"
#include "fuselab/gp/mixed_data.hpp"

namespace fuselab::gp {

/// Grouped one-hot encoding: concatenation of one block per categorical
/// variable, each block a unit vector selecting the level.
inline Eigen::VectorXd encode_categorical(std::span<const int> levels,
                                          std::span<const CategoricalVariable> variables) {
    if (levels.size() != variables.size()) {
        throw DomainError("encode_categorical: expected " + std::to_string(variables.size()) +
                          " level indices, got " + std::to_string(levels.size()));
    }
    std::size_t total = 0;
    for (const auto& v : variables) total += v.cardinality();
    Eigen::VectorXd pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
    std::size_t offset = 0;
    for (std::size_t i = 0; i < variables.size(); ++i) {
        const int level = levels[i];
        if (level < 0 || static_cast<std::size_t>(level) >= variables[i].cardinality()) {
            throw DomainError("encode_categorical: level " + std::to_string(level) + " out of range for '" +
                              variables[i].name + "'");
        }
        pi[static_cast<Eigen::Index>(offset + static_cast<std::size_t>(level))] = 1.0;
        offset += variables[i].cardinality();
    }
    return pi;
}

/// h = pi * A: maps an encoded categorical vector to the latent space.
inline Eigen::VectorXd embed(const Eigen::VectorXd& pi, const Eigen::MatrixXd& mapping) {
    if (pi.size() != mapping.rows()) {
        throw DomainError("embed: encoding length " + std::to_string(pi.size()) + " does not match mapping rows " +
                          std::to_string(mapping.rows()));
    }
    return mapping.transpose() * pi;
}

// Effective latent dimension: the configured one, capped below the total
// level count (a single two-level variable gets one latent coordinate).
inline std::size_t effective_latent_dim(std::size_t configured, std::size_t total_levels) {
    if (total_levels == 0) return 0;
    const std::size_t cap = total_levels > 1 ? total_levels - 1 : 1;
    return std::max<std::size_t>(1, std::min(configured, cap));
}

/// Mapping matrix plus the block offsets of each variable, so that the
/// latent point of a row is a sum of selected rows of A.
class Embedding {
public:
    Embedding() = default;

    Embedding(std::vector<CategoricalVariable> variables, Eigen::MatrixXd mapping)
        : variables_(std::move(variables)), mapping_(std::move(mapping)) {
        std::size_t offset = 0;
        for (const auto& v : variables_) {
            offsets_.push_back(offset);
            offset += v.cardinality();
        }
        if (static_cast<Eigen::Index>(offset) != mapping_.rows()) {
            throw DomainError("Embedding: mapping has " + std::to_string(mapping_.rows()) + " rows, expected " +
                              std::to_string(offset));
        }
    }

    std::size_t latent_dim() const { return static_cast<std::size_t>(mapping_.cols()); }
    const Eigen::MatrixXd& mapping() const { return mapping_; }
    const std::vector<CategoricalVariable>& variables() const { return variables_; }
    std::size_t row_of(std::size_t variable, int level) const {
        return offsets_[variable] + static_cast<std::size_t>(level);
    }

    Eigen::VectorXd latent(std::span<const int> levels) const {
        Eigen::VectorXd h = Eigen::VectorXd::Zero(mapping_.cols());
        for (std::size_t i = 0; i < levels.size(); ++i) {
            h += mapping_.row(static_cast<Eigen::Index>(row_of(i, levels[i]))).transpose();
        }
        return h;
    }

private:
    std::vector<CategoricalVariable> variables_;
    Eigen::MatrixXd mapping_;
    std::vector<std::size_t> offsets_;
};

}  // namespace fuselab::gp
