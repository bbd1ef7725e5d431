#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab::analysis {

/// Root of the mean squared residual; `squared` returns the MSE itself.
inline double prediction_error(std::span<const double> y, std::span<const double> y_hat, bool squared = false) {
    if (y.size() != y_hat.size()) {
        throw DomainError("metric: length mismatch (" + std::to_string(y.size()) + " vs " +
                          std::to_string(y_hat.size()) + ")");
    }
    if (y.empty()) throw DomainError("metric: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    const double mse = ss / static_cast<double>(y.size());
    return squared ? mse : std::sqrt(mse);
}

inline double r_squared(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw DomainError("r_squared: length mismatch");
    if (y.size() < 2) throw DomainError("r_squared: at least two points required");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    }
    if (!(ss_tot > 0.0)) throw DomainError("r_squared: measured values are constant");
    return 1.0 - ss_res / ss_tot;
}

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> r;
};

inline CorrelationMatrix pearson_matrix(const std::vector<std::string>& names,
                                        const std::vector<std::vector<double>>& columns) {
    if (names.size() != columns.size()) throw DomainError("pearson_matrix: one name per column required");
    if (columns.empty()) throw DomainError("pearson_matrix: no columns");
    const std::size_t n = columns.front().size();
    if (n < 2) throw DomainError("pearson_matrix: at least two observations required");
    std::vector<std::vector<double>> centered;
    std::vector<double> norms;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != n) throw DomainError("pearson_matrix: column '" + names[c] + "' has a different length");
        double mean = 0.0;
        for (double v : columns[c]) mean += v;
        mean /= static_cast<double>(n);
        std::vector<double> z(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = columns[c][i] - mean;
            ss += z[i] * z[i];
        }
        if (!(ss > 0.0)) throw DomainError("pearson_matrix: column '" + names[c] + "' is constant");
        centered.push_back(std::move(z));
        norms.push_back(std::sqrt(ss));
    }
    const std::size_t m = columns.size();
    CorrelationMatrix out{names, std::vector<std::vector<double>>(m, std::vector<double>(m, 1.0))};
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered[a][i] * centered[b][i];
            const double r = std::clamp(s / (norms[a] * norms[b]), -1.0, 1.0);
            out.r[a][b] = out.r[b][a] = r;
        }
    }
    return out;
}

}  // namespace fuselab::analysis
