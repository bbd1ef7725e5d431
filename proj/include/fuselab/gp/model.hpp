#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "fuselab/errors.hpp"
#include "fuselab/gp/embedding.hpp"
#include "fuselab/gp/kernel.hpp"
#include "fuselab/gp/lbfgs.hpp"
#include "fuselab/gp/mean_function.hpp"
#include "fuselab/gp/mixed_data.hpp"
#include "fuselab/util/parallel.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab::gp {

struct MeanConfig {
    MeanFunction::Kind kind = MeanFunction::Kind::constant;
    std::vector<std::size_t> hidden;
    double dropout = 0.0;
    bool source_dependent = false;

    static MeanConfig constant() { return {}; }
    static MeanConfig ffnn(std::vector<std::size_t> hidden, double dropout, bool source_dependent) {
        return {MeanFunction::Kind::ffnn, std::move(hidden), dropout, source_dependent};
    }
};

struct FitConfig {
    MeanConfig mean;
    std::size_t latent_dim = 2;
    int n_starts = 8;
    int max_iterations = 200;
    double nugget_floor = 1e-8;
    double nugget_floor_max = 1e-4;
    // Normal prior on ln(nugget).
    double nugget_prior_log_median = -9.210340371976184;  // ln(1e-4)
    double nugget_prior_log_sd = 3.0;
    // Adam refinement with live dropout after the deterministic phase.
    int dropout_refine_steps = 60;
    double dropout_refine_rate = 0.005;
    bool per_source_output_scaling = true;
    int jobs = 1;
};

/// Column-wise affine maps to the standardized scale. Outputs are scaled
/// per level of the source column when the dataset carries one.
struct Standardization {
    std::vector<double> input_center;
    std::vector<double> input_scale;
    std::vector<double> output_center;
    std::vector<double> output_scale;

    static Standardization from_data(const MixedDataset& data, bool per_source) {
        const std::size_t n = data.size();
        const std::size_t dx = data.schema.quantitative_dim();
        Standardization s;
        auto center_scale = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size())) : 0.0;
            if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
            return std::pair{mean, sd};
        };
        for (std::size_t k = 0; k < dx; ++k) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = data.inputs[i].quantitative[k];
            auto [c, sc] = center_scale(col);
            s.input_center.push_back(c);
            s.input_scale.push_back(sc);
        }
        if (per_source && data.source_column) {
            const std::size_t src = *data.source_column;
            const std::size_t levels = data.schema.categorical[src].cardinality();
            for (std::size_t l = 0; l < levels; ++l) {
                std::vector<double> ys;
                for (std::size_t i = 0; i < n; ++i) {
                    if (static_cast<std::size_t>(data.inputs[i].categorical[src]) == l) ys.push_back(data.response[i]);
                }
                if (ys.empty()) {
                    s.output_center.push_back(0.0);
                    s.output_scale.push_back(1.0);
                } else {
                    auto [c, sc] = center_scale(ys);
                    s.output_center.push_back(c);
                    s.output_scale.push_back(sc);
                }
            }
        } else {
            auto [c, sc] = center_scale(data.response);
            s.output_center.push_back(c);
            s.output_scale.push_back(sc);
        }
        return s;
    }

    bool per_source() const { return output_center.size() > 1; }

    // Standardized responses are snapped to a 2^-36 grid. Far below any
    // physical resolution, but it makes y -> a*y + b produce bit-identical
    // training targets (up to sign), so refits are exactly equivariant.
    double output(double y, std::size_t slot) const {
        constexpr double grid = 68719476736.0;  // 2^36
        return std::round((y - output_center[slot]) / output_scale[slot] * grid) / grid;
    }
};

/// Everything the MAP fit estimates.
struct HyperParameters {
    std::vector<double> omega;     // log10 inverse squared length scales
    Eigen::MatrixXd mapping;       // (sum of levels) x latent_dim
    double process_variance = 1.0;
    double nugget = 1e-8;
    MeanFunction mean = MeanFunction::constant();
};

namespace detail {

inline constexpr double kLn10 = 2.302585092994046;

// Box bounds of the packed parameter vector.
struct Bounds {
    static constexpr double omega_lo = -6.0, omega_hi = 3.0;
    static constexpr double mapping_lo = -4.0, mapping_hi = 4.0;
    static constexpr double log_var_lo = -9.210340371976184, log_var_hi = 6.907755278982137;
    static constexpr double log_nugget_lo = -32.0, log_nugget_hi = 2.302585092994046;
    static constexpr double beta_lo = -20.0, beta_hi = 20.0;
    static constexpr double weight_lo = -10.0, weight_hi = 10.0;
};

}  // namespace detail

/// Negative log posterior of the training data (up to constants):
///   1/2 log|C_delta| + 1/2 (y - m)^T C_delta^{-1} (y - m) - log p(params)
/// on the standardized scale, with analytic gradients for the kernel,
/// embedding, variance and nugget, and -J^T alpha for the mean parameters
/// (J by central differences of the mean outputs).
class MapObjective {
public:
    struct Layout {
        std::size_t dx = 0, levels = 0, latent = 0, mean = 0;
        std::size_t omega() const { return 0; }
        std::size_t mapping() const { return dx; }
        std::size_t log_variance() const { return dx + levels * latent; }
        std::size_t log_nugget() const { return log_variance() + 1; }
        std::size_t beta() const { return log_nugget() + 1; }
        std::size_t size() const { return beta() + mean; }
    };

    MapObjective(const MixedDataset& data, const Standardization& standardization, MeanFunction mean_template,
                 std::size_t latent_dim, double nugget_floor, double prior_log_median, double prior_log_sd)
        : mean_(std::move(mean_template)),
          floor_(nugget_floor),
          prior_mu_(prior_log_median),
          prior_sd_(prior_log_sd) {
        const std::size_t n = data.size();
        const auto& schema = data.schema;
        layout_.dx = schema.quantitative_dim();
        layout_.levels = schema.total_levels();
        layout_.latent = layout_.levels == 0 ? 0 : latent_dim;
        layout_.mean = mean_.param_count();
        x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layout_.dx));
        y_.resize(static_cast<Eigen::Index>(n));
        dt_ = schema.categorical_dim();
        rows_.resize(n * dt_);
        std::vector<std::size_t> offsets;
        std::size_t off = 0;
        for (const auto& c : schema.categorical) {
            offsets.push_back(off);
            off += c.cardinality();
        }
        // The kernel only sees differences of latent points, so translating a
        // block of A or rotating the latent plane changes nothing. Pin the
        // first level of every variable at the origin and the second level
        // of the first variable on the first axis.
        pinned_.assign(layout_.levels * layout_.latent, false);
        for (std::size_t v = 0; v < dt_; ++v) {
            for (std::size_t b = 0; b < layout_.latent; ++b) pinned_[offsets[v] * layout_.latent + b] = true;
        }
        if (dt_ > 0 && schema.categorical[0].cardinality() > 1) {
            for (std::size_t b = 1; b < layout_.latent; ++b) pinned_[(offsets[0] + 1) * layout_.latent + b] = true;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto& u = data.inputs[i];
            for (std::size_t k = 0; k < layout_.dx; ++k) {
                x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    (u.quantitative[k] - standardization.input_center[k]) / standardization.input_scale[k];
            }
            for (std::size_t v = 0; v < dt_; ++v) rows_[i * dt_ + v] = offsets[v] + static_cast<std::size_t>(u.categorical[v]);
            std::size_t slot = 0;
            if (standardization.per_source()) slot = static_cast<std::size_t>(u.categorical[*data.source_column]);
            y_[static_cast<Eigen::Index>(i)] = standardization.output(data.response[i], slot);
        }
    }

    const Layout& layout() const { return layout_; }
    std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
    double nugget_floor() const { return floor_; }
    const MeanFunction& mean_template() const { return mean_; }

    Eigen::VectorXd pack(const HyperParameters& p) const {
        Eigen::VectorXd t(static_cast<Eigen::Index>(layout_.size()));
        for (std::size_t k = 0; k < layout_.dx; ++k) t[static_cast<Eigen::Index>(k)] = p.omega[k];
        for (std::size_t a = 0; a < layout_.levels; ++a) {
            for (std::size_t b = 0; b < layout_.latent; ++b) {
                t[static_cast<Eigen::Index>(layout_.mapping() + a * layout_.latent + b)] =
                    p.mapping(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
        t[static_cast<Eigen::Index>(layout_.log_variance())] = std::log(p.process_variance);
        t[static_cast<Eigen::Index>(layout_.log_nugget())] =
            std::max(detail::Bounds::log_nugget_lo, std::log(std::max(p.nugget - floor_, 1e-300)));
        t.segment(static_cast<Eigen::Index>(layout_.beta()), static_cast<Eigen::Index>(layout_.mean)) = p.mean.params();
        return t;
    }

    HyperParameters unpack(const Eigen::VectorXd& t) const {
        HyperParameters p;
        p.omega.assign(t.data(), t.data() + layout_.dx);
        p.mapping.resize(static_cast<Eigen::Index>(layout_.levels), static_cast<Eigen::Index>(layout_.latent));
        for (std::size_t a = 0; a < layout_.levels; ++a) {
            for (std::size_t b = 0; b < layout_.latent; ++b) {
                p.mapping(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    t[static_cast<Eigen::Index>(layout_.mapping() + a * layout_.latent + b)];
            }
        }
        p.process_variance = std::exp(t[static_cast<Eigen::Index>(layout_.log_variance())]);
        p.nugget = floor_ + std::exp(t[static_cast<Eigen::Index>(layout_.log_nugget())]);
        p.mean = mean_;
        p.mean.set_params(t.segment(static_cast<Eigen::Index>(layout_.beta()), static_cast<Eigen::Index>(layout_.mean)));
        return p;
    }

    std::pair<Eigen::VectorXd, Eigen::VectorXd> bounds() const {
        using B = detail::Bounds;
        const auto n = static_cast<Eigen::Index>(layout_.size());
        Eigen::VectorXd lo(n), hi(n);
        for (std::size_t k = 0; k < layout_.dx; ++k) {
            lo[static_cast<Eigen::Index>(k)] = B::omega_lo;
            hi[static_cast<Eigen::Index>(k)] = B::omega_hi;
        }
        for (std::size_t k = 0; k < layout_.levels * layout_.latent; ++k) {
            const bool pin = pinned_[k];
            lo[static_cast<Eigen::Index>(layout_.mapping() + k)] = pin ? 0.0 : B::mapping_lo;
            hi[static_cast<Eigen::Index>(layout_.mapping() + k)] = pin ? 0.0 : B::mapping_hi;
        }
        lo[static_cast<Eigen::Index>(layout_.log_variance())] = B::log_var_lo;
        hi[static_cast<Eigen::Index>(layout_.log_variance())] = B::log_var_hi;
        lo[static_cast<Eigen::Index>(layout_.log_nugget())] = B::log_nugget_lo;
        hi[static_cast<Eigen::Index>(layout_.log_nugget())] = B::log_nugget_hi;
        const bool constant = mean_.kind() == MeanFunction::Kind::constant;
        for (std::size_t k = 0; k < layout_.mean; ++k) {
            lo[static_cast<Eigen::Index>(layout_.beta() + k)] = constant ? B::beta_lo : B::weight_lo;
            hi[static_cast<Eigen::Index>(layout_.beta() + k)] = constant ? B::beta_hi : B::weight_hi;
        }
        return {lo, hi};
    }

    double value(const HyperParameters& p) const { return evaluate(pack(p), nullptr); }

    /// `dropout_scale`: n x last-hidden-width multipliers for train-mode
    /// evaluation, or nullptr for the deterministic (infer-mode) mean.
    double evaluate(const Eigen::VectorXd& t, Eigen::VectorXd* grad,
                    const Eigen::MatrixXd* dropout_scale = nullptr) const {
        const std::size_t n = size();
        const auto N = static_cast<Eigen::Index>(n);
        const std::size_t dx = layout_.dx;
        const std::size_t dh = layout_.latent;

        std::vector<double> scales(dx);
        for (std::size_t k = 0; k < dx; ++k) scales[k] = std::pow(10.0, t[static_cast<Eigen::Index>(k)]);
        const Eigen::MatrixXd h = latent_rows(t);
        const double sigma2 = std::exp(t[static_cast<Eigen::Index>(layout_.log_variance())]);
        const double excess = std::exp(t[static_cast<Eigen::Index>(layout_.log_nugget())]);
        const double delta = floor_ + excess;

        Eigen::MatrixXd r(N, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            r(i, i) = 1.0;
            for (Eigen::Index j = 0; j < i; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < dx; ++k) {
                    const double d = x_(i, static_cast<Eigen::Index>(k)) - x_(j, static_cast<Eigen::Index>(k));
                    s += scales[k] * d * d;
                }
                for (std::size_t b = 0; b < dh; ++b) {
                    const double d = h(i, static_cast<Eigen::Index>(b)) - h(j, static_cast<Eigen::Index>(b));
                    s += d * d;
                }
                r(i, j) = r(j, i) = std::exp(-s);
            }
        }
        Eigen::MatrixXd k = sigma2 * r;
        k.diagonal().array() += delta;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const Eigen::VectorXd m = mean_values(t, h, dropout_scale);
        const Eigen::VectorXd resid = y_ - m;
        const Eigen::VectorXd alpha = llt.solve(resid);
        double logdet = 0.0;
        const auto& lmat = llt.matrixLLT();
        for (Eigen::Index i = 0; i < N; ++i) {
            const double d = lmat(i, i);
            if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
            logdet += 2.0 * std::log(d);
        }
        const double log_delta = std::log(delta);
        const double z = (log_delta - prior_mu_) / prior_sd_;
        const double loss = 0.5 * logdet + 0.5 * resid.dot(alpha) + 0.5 * z * z;
        if (!std::isfinite(loss)) return std::numeric_limits<double>::infinity();
        if (grad == nullptr) return loss;

        grad->setZero(static_cast<Eigen::Index>(layout_.size()));
        Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(N, N));
        w.noalias() -= alpha * alpha.transpose();

        double g_logvar = 0.0;
        std::vector<double> g_omega(dx, 0.0);
        Eigen::MatrixXd rowsum = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(dh));
        for (Eigen::Index i = 0; i < N; ++i) {
            g_logvar += 0.5 * w(i, i) * sigma2;
            for (Eigen::Index j = 0; j < i; ++j) {
                // e = 1/2 W_ij dK_ij/dlog(sigma2), counted for (i,j) and (j,i)
                const double e = w(i, j) * sigma2 * r(i, j);
                g_logvar += e;
                for (std::size_t kk = 0; kk < dx; ++kk) {
                    const double d = x_(i, static_cast<Eigen::Index>(kk)) - x_(j, static_cast<Eigen::Index>(kk));
                    g_omega[kk] -= e * detail::kLn10 * scales[kk] * d * d;
                }
                for (std::size_t b = 0; b < dh; ++b) {
                    const auto bb = static_cast<Eigen::Index>(b);
                    const double gij = -e * (h(i, bb) - h(j, bb));
                    rowsum(i, bb) += gij;
                    rowsum(j, bb) -= gij;
                }
            }
        }
        for (std::size_t kk = 0; kk < dx; ++kk) (*grad)[static_cast<Eigen::Index>(kk)] = g_omega[kk];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t v = 0; v < dt_; ++v) {
                const std::size_t a = rows_[i * dt_ + v];
                for (std::size_t b = 0; b < dh; ++b) {
                    (*grad)[static_cast<Eigen::Index>(layout_.mapping() + a * dh + b)] +=
                        2.0 * rowsum(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
                }
            }
        }
        (*grad)[static_cast<Eigen::Index>(layout_.log_variance())] = g_logvar;
        (*grad)[static_cast<Eigen::Index>(layout_.log_nugget())] =
            0.5 * excess * w.trace() + z / prior_sd_ * excess / delta;

        if (mean_.kind() == MeanFunction::Kind::constant) {
            (*grad)[static_cast<Eigen::Index>(layout_.beta())] = -alpha.sum();
        } else {
            const Eigen::MatrixXd jac = mean_jacobian(t, h, dropout_scale);
            grad->segment(static_cast<Eigen::Index>(layout_.beta()), static_cast<Eigen::Index>(layout_.mean)) =
                -jac.transpose() * alpha;
            if (mean_.source_dependent() && dh > 0) {
                // the mean also sees h, so A enters through m as well
                MeanFunction mf = mean_;
                mf.set_params(t.segment(static_cast<Eigen::Index>(layout_.beta()), static_cast<Eigen::Index>(layout_.mean)));
                for (std::size_t b = 0; b < dh; ++b) {
                    const double step = 1e-6;
                    Eigen::MatrixXd hp = h, hm = h;
                    hp.col(static_cast<Eigen::Index>(b)).array() += step;
                    hm.col(static_cast<Eigen::Index>(b)).array() -= step;
                    const Eigen::VectorXd dm = (eval_rows(mf, hp, dropout_scale) - eval_rows(mf, hm, dropout_scale)) / (2 * step);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double gi = -alpha[static_cast<Eigen::Index>(i)] * dm[static_cast<Eigen::Index>(i)];
                        for (std::size_t v = 0; v < dt_; ++v) {
                            (*grad)[static_cast<Eigen::Index>(layout_.mapping() + rows_[i * dt_ + v] * dh + b)] += gi;
                        }
                    }
                }
            }
        }
        return loss;
    }

    Eigen::MatrixXd latent_rows(const Eigen::VectorXd& t) const {
        const std::size_t n = size();
        const std::size_t dh = layout_.latent;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dh));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t v = 0; v < dt_; ++v) {
                const std::size_t a = rows_[i * dt_ + v];
                for (std::size_t b = 0; b < dh; ++b) {
                    h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) +=
                        t[static_cast<Eigen::Index>(layout_.mapping() + a * dh + b)];
                }
            }
        }
        return h;
    }

private:
    Eigen::VectorXd mean_values(const Eigen::VectorXd& t, const Eigen::MatrixXd& h,
                                const Eigen::MatrixXd* dropout_scale) const {
        MeanFunction m = mean_;
        m.set_params(t.segment(static_cast<Eigen::Index>(layout_.beta()), static_cast<Eigen::Index>(layout_.mean)));
        return eval_rows(m, h, dropout_scale);
    }

    Eigen::VectorXd eval_rows(const MeanFunction& m, const Eigen::MatrixXd& h,
                              const Eigen::MatrixXd* dropout_scale) const {
        const auto N = static_cast<Eigen::Index>(size());
        Eigen::VectorXd out(N);
        if (m.kind() == MeanFunction::Kind::constant) {
            out.setConstant(m.params()[0]);
            return out;
        }
        // Row-major copies so each row is a contiguous span.
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = x_;
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> hr = h;
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ds;
        if (dropout_scale) ds = *dropout_scale;
        for (Eigen::Index i = 0; i < N; ++i) {
            std::span<const double> xs(xr.data() + i * xr.cols(), static_cast<std::size_t>(xr.cols()));
            std::span<const double> hs(hr.data() + i * hr.cols(), static_cast<std::size_t>(hr.cols()));
            std::span<const double> scale;
            if (dropout_scale) scale = {ds.data() + i * ds.cols(), static_cast<std::size_t>(ds.cols())};
            out[i] = m.eval(xs, hs, scale);
        }
        return out;
    }

    Eigen::MatrixXd mean_jacobian(const Eigen::VectorXd& t, const Eigen::MatrixXd& h,
                                  const Eigen::MatrixXd* dropout_scale) const {
        const auto N = static_cast<Eigen::Index>(size());
        const auto P = static_cast<Eigen::Index>(layout_.mean);
        Eigen::VectorXd beta = t.segment(static_cast<Eigen::Index>(layout_.beta()), P);
        Eigen::MatrixXd jac(N, P);
        MeanFunction m = mean_;
        for (Eigen::Index p = 0; p < P; ++p) {
            const double step = 1e-6 * std::max(1.0, std::abs(beta[p]));
            const double orig = beta[p];
            beta[p] = orig + step;
            m.set_params(beta);
            const Eigen::VectorXd plus = eval_rows(m, h, dropout_scale);
            beta[p] = orig - step;
            m.set_params(beta);
            const Eigen::VectorXd minus = eval_rows(m, h, dropout_scale);
            beta[p] = orig;
            jac.col(p) = (plus - minus) / (2.0 * step);
        }
        return jac;
    }

    MeanFunction mean_;
    double floor_;
    double prior_mu_;
    double prior_sd_;
    Layout layout_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    std::size_t dt_ = 0;
    std::vector<std::size_t> rows_;  // per row and variable: row of the mapping matrix
    std::vector<bool> pinned_;       // gauge-fixed entries of A
};

struct Prediction {
    std::vector<double> mean;
    std::vector<double> variance;
    std::size_t clamped_variances = 0;  // round-off negatives reset to 0
};

struct FitDiagnostics {
    double map_loss = std::numeric_limits<double>::infinity();
    int starts_attempted = 0;
    int starts_succeeded = 0;
    int best_start = -1;
    double nugget_floor_used = 0.0;
    std::vector<double> best_trace;  // L-BFGS objective trace of the winning start
};

/// Trained mixed-input GP emulator. Immutable once constructed; prediction
/// is safe from multiple threads.
class GpModel {
public:
    GpModel(MixedDataset training, Standardization standardization, HyperParameters params, double nugget_floor,
            FitDiagnostics diagnostics = {})
        : training_(std::move(training)),
          standardization_(std::move(standardization)),
          params_(std::move(params)),
          nugget_floor_(nugget_floor),
          diagnostics_(std::move(diagnostics)) {
        training_.validate();
        const auto& schema = training_.schema;
        if (params_.omega.size() != schema.quantitative_dim()) throw DomainError("GpModel: one scale per quantitative input");
        if (!(params_.process_variance > 0.0)) throw DomainError("GpModel: process variance must be positive");
        if (!(params_.nugget >= nugget_floor_)) throw DomainError("GpModel: nugget below floor");
        embedding_ = Embedding(schema.categorical, params_.mapping);
        factorize();
    }

    static GpModel fit(const MixedDataset& data, const FitConfig& config, std::uint64_t seed);

    const MixedSchema& schema() const { return training_.schema; }
    const MixedDataset& training_data() const { return training_; }
    const Standardization& standardization() const { return standardization_; }
    const HyperParameters& parameters() const { return params_; }
    const Embedding& embedding() const { return embedding_; }
    const FitDiagnostics& diagnostics() const { return diagnostics_; }
    std::optional<std::size_t> source_column() const { return training_.source_column; }
    double nugget() const { return params_.nugget; }
    double nugget_floor() const { return nugget_floor_; }
    double process_variance() const { return params_.process_variance; }
    std::size_t training_size() const { return training_.size(); }

    Prediction predict(const std::vector<MixedInput>& inputs) const {
        Prediction out;
        const auto m = static_cast<Eigen::Index>(inputs.size());
        out.mean.resize(inputs.size());
        out.variance.resize(inputs.size());
        if (m == 0) return out;
        const Eigen::Index n = xs_.rows();
        const std::size_t dx = schema().quantitative_dim();
        const double sigma2 = params_.process_variance;
        Eigen::MatrixXd kstar(n, m);
        std::vector<double> xq(dx);
        for (Eigen::Index c = 0; c < m; ++c) {
            const auto& u = inputs[static_cast<std::size_t>(c)];
            check_input(schema(), u);
            standardize_into(u, xq);
            const Eigen::VectorXd hq = embedding_.latent(u.categorical);
            for (Eigen::Index i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < dx; ++k) {
                    const double d = xq[k] - xs_(i, static_cast<Eigen::Index>(k));
                    s += scales_[k] * d * d;
                }
                for (Eigen::Index b = 0; b < hq.size(); ++b) {
                    const double d = hq[b] - hs_(i, b);
                    s += d * d;
                }
                kstar(i, c) = sigma2 * std::exp(-s);
            }
            const double mq = params_.mean.eval(xq, {hq.data(), static_cast<std::size_t>(hq.size())});
            out.mean[static_cast<std::size_t>(c)] = mq;
        }
        const Eigen::VectorXd cross = kstar.transpose() * alpha_;
        const Eigen::MatrixXd v = llt_.matrixL().solve(kstar);
        for (Eigen::Index c = 0; c < m; ++c) {
            const std::size_t ci = static_cast<std::size_t>(c);
            double mean_s = out.mean[ci] + cross[c];
            double var_s = sigma2 + params_.nugget - v.col(c).squaredNorm();
            if (var_s < 0.0) {
                var_s = 0.0;
                ++out.clamped_variances;
            }
            const std::size_t slot = output_slot(inputs[ci]);
            out.mean[ci] = standardization_.output_center[slot] + standardization_.output_scale[slot] * mean_s;
            out.variance[ci] = standardization_.output_scale[slot] * standardization_.output_scale[slot] * var_s;
        }
        return out;
    }

    Prediction predict_one(const MixedInput& u) const { return predict(std::vector<MixedInput>{u}); }

    static MapObjective make_objective(const MixedDataset& data, const Standardization& st, const MeanFunction& mean,
                                       std::size_t latent_dim, double floor, const FitConfig& config) {
        return MapObjective(data, st, mean, latent_dim, floor, config.nugget_prior_log_median,
                            config.nugget_prior_log_sd);
    }

private:
    std::size_t output_slot(const MixedInput& u) const {
        if (!standardization_.per_source()) return 0;
        return static_cast<std::size_t>(u.categorical[*training_.source_column]);
    }

    void standardize_into(const MixedInput& u, std::vector<double>& out) const {
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = (u.quantitative[k] - standardization_.input_center[k]) / standardization_.input_scale[k];
        }
    }

    void factorize() {
        const std::size_t n = training_.size();
        const std::size_t dx = schema().quantitative_dim();
        const auto N = static_cast<Eigen::Index>(n);
        scales_.resize(dx);
        for (std::size_t k = 0; k < dx; ++k) scales_[k] = std::pow(10.0, params_.omega[k]);
        xs_.resize(N, static_cast<Eigen::Index>(dx));
        hs_.resize(N, static_cast<Eigen::Index>(embedding_.latent_dim()));
        Eigen::VectorXd ys(N);
        Eigen::VectorXd ms(N);
        std::vector<double> xq(dx);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& u = training_.inputs[i];
            standardize_into(u, xq);
            for (std::size_t k = 0; k < dx; ++k) xs_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = xq[k];
            const Eigen::VectorXd h = embedding_.latent(u.categorical);
            hs_.row(static_cast<Eigen::Index>(i)) = h.transpose();
            const std::size_t slot = output_slot(u);
            ys[static_cast<Eigen::Index>(i)] = standardization_.output(training_.response[i], slot);
            ms[static_cast<Eigen::Index>(i)] = params_.mean.eval(xq, {h.data(), static_cast<std::size_t>(h.size())});
        }
        Eigen::MatrixXd k(N, N);
        for (Eigen::Index i = 0; i < N; ++i) {
            k(i, i) = params_.process_variance + params_.nugget;
            for (Eigen::Index j = 0; j < i; ++j) {
                double s = 0.0;
                for (std::size_t kk = 0; kk < dx; ++kk) {
                    const double d = xs_(i, static_cast<Eigen::Index>(kk)) - xs_(j, static_cast<Eigen::Index>(kk));
                    s += scales_[kk] * d * d;
                }
                for (Eigen::Index b = 0; b < hs_.cols(); ++b) {
                    const double d = hs_(i, b) - hs_(j, b);
                    s += d * d;
                }
                k(i, j) = k(j, i) = params_.process_variance * std::exp(-s);
            }
        }
        llt_.compute(k);
        if (llt_.info() != Eigen::Success) {
            throw NumericError("GpModel: covariance matrix is not positive definite (nugget " +
                               std::to_string(params_.nugget) + ")");
        }
        alpha_ = llt_.solve(ys - ms);
    }

    MixedDataset training_;
    Standardization standardization_;
    HyperParameters params_;
    double nugget_floor_;
    FitDiagnostics diagnostics_;
    Embedding embedding_;
    std::vector<double> scales_;
    Eigen::MatrixXd xs_;
    Eigen::MatrixXd hs_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
};

namespace detail {

struct StartResult {
    Eigen::VectorXd theta;
    double loss = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

inline Eigen::VectorXd initial_point(const MapObjective& obj, const MeanFunction& mean_template, int start,
                                     Rng& rng) {
    const auto& lay = obj.layout();
    HyperParameters p;
    p.omega.resize(lay.dx);
    for (auto& w : p.omega) w = start == 0 ? -0.5 : rng.uniform(-2.0, 1.0);
    p.mapping.resize(static_cast<Eigen::Index>(lay.levels), static_cast<Eigen::Index>(lay.latent));
    for (Eigen::Index a = 0; a < p.mapping.rows(); ++a) {
        for (Eigen::Index b = 0; b < p.mapping.cols(); ++b) p.mapping(a, b) = rng.uniform(-1.0, 1.0);
    }
    p.process_variance = start == 0 ? 1.0 : std::exp(rng.uniform(-1.0, 1.0));
    p.nugget = obj.nugget_floor() + (start == 0 ? 1e-2 : std::pow(10.0, rng.uniform(-4.0, -1.0)));
    p.mean = mean_template;
    p.mean.initialize(rng);
    return obj.pack(p);
}

inline StartResult run_start(const MapObjective& obj, const FitConfig& config, const MeanFunction& mean_template,
                             int start, std::uint64_t seed) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(start)));
    const auto [lo, hi] = obj.bounds();
    StartResult res;
    Eigen::VectorXd x0 = initial_point(obj, mean_template, start, rng);
    LbfgsOptions opt;
    opt.max_iterations = config.max_iterations;
    auto f = [&obj](const Eigen::VectorXd& t, Eigen::VectorXd& g) { return obj.evaluate(t, &g); };
    auto lb = minimize_lbfgs(f, x0, lo, hi, opt);
    res.theta = lb.x;
    res.loss = lb.value;
    res.trace = std::move(lb.trace);
    if (!std::isfinite(res.loss)) return res;

    const bool refine = mean_template.kind() == MeanFunction::Kind::ffnn && mean_template.dropout() > 0.0 &&
                        config.dropout_refine_steps > 0;
    if (refine) {
        const auto P = res.theta.size();
        const auto N = static_cast<Eigen::Index>(obj.size());
        const auto W = static_cast<Eigen::Index>(mean_template.last_hidden_width());
        Eigen::VectorXd theta = res.theta;
        Eigen::VectorXd m1 = Eigen::VectorXd::Zero(P), m2 = Eigen::VectorXd::Zero(P), g(P);
        Eigen::MatrixXd mask(N, W);
        std::vector<double> row(static_cast<std::size_t>(W));
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        for (int step = 1; step <= config.dropout_refine_steps; ++step) {
            for (Eigen::Index i = 0; i < N; ++i) {
                mean_template.sample_dropout(rng, row);
                for (Eigen::Index c = 0; c < W; ++c) mask(i, c) = row[static_cast<std::size_t>(c)];
            }
            const double v = obj.evaluate(theta, &g, &mask);
            if (!std::isfinite(v)) break;
            m1 = b1 * m1 + (1 - b1) * g;
            m2 = b2 * m2 + (1 - b2) * g.cwiseProduct(g);
            const double c1 = 1 - std::pow(b1, step), c2 = 1 - std::pow(b2, step);
            for (Eigen::Index k = 0; k < P; ++k) {
                theta[k] -= config.dropout_refine_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                theta[k] = std::clamp(theta[k], lo[k], hi[k]);
            }
        }
        const double refined = obj.evaluate(theta, nullptr);
        if (std::isfinite(refined)) {
            res.theta = theta;
            res.loss = refined;
        }
    }
    return res;
}

}  // namespace detail

/// MAP fit: best of `n_starts` L-BFGS runs. If every start fails to
/// factorize, the nugget floor is raised tenfold up to `nugget_floor_max`.
inline GpModel GpModel::fit(const MixedDataset& data, const FitConfig& config, std::uint64_t seed) {
    data.validate();
    if (data.size() < 2) throw DomainError("fit: at least two training points required");
    if (config.n_starts < 1) throw DomainError("fit: n_starts must be at least 1");
    const auto& schema = data.schema;
    const std::size_t latent = effective_latent_dim(config.latent_dim, schema.total_levels());
    MeanFunction mean_template = MeanFunction::constant();
    if (config.mean.kind == MeanFunction::Kind::ffnn) {
        mean_template = MeanFunction::ffnn(schema.quantitative_dim(), latent, config.mean.hidden, config.mean.dropout,
                                           config.mean.source_dependent && latent > 0);
    }
    const auto st = Standardization::from_data(data, config.per_source_output_scaling);

    std::string failures;
    for (double floor = config.nugget_floor; floor <= config.nugget_floor_max * (1 + 1e-9); floor *= 10.0) {
        const MapObjective obj = make_objective(data, st, mean_template, latent, floor, config);
        std::vector<detail::StartResult> results(static_cast<std::size_t>(config.n_starts));
        parallel_for(results.size(), config.jobs, [&](std::size_t s) {
            results[s] = detail::run_start(obj, config, mean_template, static_cast<int>(s), seed);
        });
        int best = -1;
        int ok = 0;
        for (std::size_t s = 0; s < results.size(); ++s) {
            if (!std::isfinite(results[s].loss)) continue;
            ++ok;
            if (best < 0 || results[s].loss < results[static_cast<std::size_t>(best)].loss) best = static_cast<int>(s);
        }
        if (best >= 0) {
            FitDiagnostics diag;
            diag.map_loss = results[static_cast<std::size_t>(best)].loss;
            diag.starts_attempted = config.n_starts;
            diag.starts_succeeded = ok;
            diag.best_start = best;
            diag.nugget_floor_used = floor;
            diag.best_trace = results[static_cast<std::size_t>(best)].trace;
            return GpModel(data, st, obj.unpack(results[static_cast<std::size_t>(best)].theta), floor, std::move(diag));
        }
        failures += " floor=" + std::to_string(floor) + ": 0/" + std::to_string(config.n_starts) + " starts factorized;";
    }
    throw TrainingError("fit: every start failed (n=" + std::to_string(data.size()) + ")" + failures);
}

/// Free-function form of mean evaluation; train mode draws dropout masks.
inline double eval_mean(const MeanFunction& mean, std::span<const double> x, std::span<const double> h, EvalMode mode,
                        Rng* rng = nullptr) {
    return mean.eval(x, h, mode, rng);
}

}  // namespace fuselab::gp
