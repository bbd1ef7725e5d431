#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "fuselab/errors.hpp"
#include "fuselab/gp/embedding.hpp"
#include "fuselab/gp/mixed_data.hpp"

namespace fuselab::gp {

// exp{-sum_i 10^omega_i (x_i - x'_i)^2 - sum_j (h_j - h'_j)^2}
inline double correlation(std::span<const double> x, std::span<const double> x_other,
                          std::span<const double> omega, std::span<const double> h,
                          std::span<const double> h_other) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_other[i];
        s += std::pow(10.0, omega[i]) * d * d;
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
        const double d = h[j] - h_other[j];
        s += d * d;
    }
    return std::exp(-s);
}

/// Mixed-input correlation. Quantitative values are used as given (the
/// model standardizes before calling it); categoricals go through A.
inline double kernel(const MixedInput& u, const MixedInput& u_other, std::span<const double> omega,
                     const Embedding& embedding) {
    if (u.quantitative.size() != u_other.quantitative.size() || u.categorical.size() != u_other.categorical.size()) {
        throw DomainError("kernel: inputs do not share a schema");
    }
    if (omega.size() != u.quantitative.size()) throw DomainError("kernel: one scale per quantitative input required");
    if (u.categorical.size() != embedding.variables().size()) {
        throw DomainError("kernel: embedding does not match the categorical inputs");
    }
    const Eigen::VectorXd h = embedding.latent(u.categorical);
    const Eigen::VectorXd h_other = embedding.latent(u_other.categorical);
    return correlation(u.quantitative, u_other.quantitative, omega, {h.data(), static_cast<std::size_t>(h.size())},
                       {h_other.data(), static_cast<std::size_t>(h_other.size())});
}

}  // namespace fuselab::gp
