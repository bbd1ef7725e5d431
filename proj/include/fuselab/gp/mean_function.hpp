#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fuselab/errors.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab::gp {

enum class EvalMode { train, infer };

/// Parametric GP mean m(x; beta): either a constant, or a small fully
/// connected tanh network with a linear output unit. A source-dependent
/// mean also consumes the latent categorical coordinates h.
///
/// Dropout acts on the last hidden layer with inverted scaling, so the
/// infer-mode output is exactly the expectation of train-mode outputs.
class MeanFunction {
public:
    enum class Kind { constant, ffnn };

    static MeanFunction constant(double beta = 0.0) {
        MeanFunction m;
        m.kind_ = Kind::constant;
        m.params_ = Eigen::VectorXd::Constant(1, beta);
        return m;
    }

    /// x_dim quantitative inputs (+ h_dim latent inputs when source dependent).
    static MeanFunction ffnn(std::size_t x_dim, std::size_t h_dim, std::vector<std::size_t> hidden,
                             double dropout, bool source_dependent) {
        if (hidden.empty()) throw DomainError("ffnn mean: at least one hidden layer required");
        for (auto w : hidden) {
            if (w == 0) throw DomainError("ffnn mean: hidden layer width must be positive");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("ffnn mean: dropout must lie in [0, 1)");
        MeanFunction m;
        m.kind_ = Kind::ffnn;
        m.x_dim_ = x_dim;
        m.h_dim_ = source_dependent ? h_dim : 0;
        m.hidden_ = std::move(hidden);
        m.dropout_ = dropout;
        m.source_dependent_ = source_dependent;
        m.params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.count_params()));
        return m;
    }

    Kind kind() const { return kind_; }
    const std::vector<std::size_t>& hidden() const { return hidden_; }
    double dropout() const { return dropout_; }
    bool source_dependent() const { return source_dependent_; }
    std::size_t x_dim() const { return x_dim_; }
    std::size_t h_dim() const { return h_dim_; }
    std::size_t input_dim() const { return x_dim_ + h_dim_; }
    std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
    std::size_t last_hidden_width() const { return hidden_.empty() ? 0 : hidden_.back(); }

    const Eigen::VectorXd& params() const { return params_; }
    void set_params(const Eigen::VectorXd& p) {
        if (p.size() != params_.size()) {
            throw DomainError("mean function: expected " + std::to_string(params_.size()) + " parameters, got " +
                              std::to_string(p.size()));
        }
        params_ = p;
    }

    // Glorot-uniform weights and zero biases; constant mean keeps beta.
    void initialize(Rng& rng) {
        if (kind_ == Kind::constant) return;
        std::size_t k = 0;
        std::size_t fan_in = input_dim();
        auto layer = [&](std::size_t out, std::size_t in) {
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            for (std::size_t i = 0; i < out * in; ++i) params_[static_cast<Eigen::Index>(k++)] = rng.uniform(-limit, limit);
            for (std::size_t i = 0; i < out; ++i) params_[static_cast<Eigen::Index>(k++)] = 0.0;
        };
        for (auto width : hidden_) {
            layer(width, fan_in);
            fan_in = width;
        }
        layer(1, fan_in);
    }

    /// `dropout_scale`, when non-empty, multiplies the last hidden layer's
    /// activations (entries 0 or 1/(1-p)). Empty means infer mode.
    double eval(std::span<const double> x, std::span<const double> h,
                std::span<const double> dropout_scale = {}) const {
        if (kind_ == Kind::constant) return params_[0];
        double buf_a[64];
        double buf_b[64];
        double* in = buf_a;
        double* out = buf_b;
        std::size_t width = input_dim();
        if (width > 64) throw DomainError("ffnn mean: input too wide");
        for (std::size_t i = 0; i < x_dim_; ++i) in[i] = x[i];
        for (std::size_t i = 0; i < h_dim_; ++i) in[x_dim_ + i] = h[i];
        const double* p = params_.data();
        for (std::size_t l = 0; l < hidden_.size(); ++l) {
            const std::size_t w_out = hidden_[l];
            for (std::size_t o = 0; o < w_out; ++o) {
                double s = p[w_out * width + o];
                const double* row = p + o * width;
                for (std::size_t i = 0; i < width; ++i) s += row[i] * in[i];
                out[o] = std::tanh(s);
            }
            p += w_out * width + w_out;
            width = w_out;
            std::swap(in, out);
        }
        if (!dropout_scale.empty()) {
            for (std::size_t i = 0; i < width; ++i) in[i] *= dropout_scale[i];
        }
        double s = p[width];
        for (std::size_t i = 0; i < width; ++i) s += p[i] * in[i];
        return s;
    }

    double eval(std::span<const double> x, std::span<const double> h, EvalMode mode, Rng* rng) const {
        if (mode == EvalMode::infer || kind_ == Kind::constant || dropout_ == 0.0) return eval(x, h);
        if (rng == nullptr) throw DomainError("mean function: train mode requires a random stream");
        std::vector<double> scale(last_hidden_width());
        sample_dropout(*rng, scale);
        return eval(x, h, scale);
    }

    void sample_dropout(Rng& rng, std::span<double> scale) const {
        const double keep = 1.0 - dropout_;
        for (auto& s : scale) s = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }

private:
    std::size_t count_params() const {
        std::size_t n = 0;
        std::size_t fan_in = input_dim();
        for (auto width : hidden_) {
            n += width * fan_in + width;
            fan_in = width;
        }
        return n + fan_in + 1;
    }

    Kind kind_ = Kind::constant;
    std::size_t x_dim_ = 0;
    std::size_t h_dim_ = 0;
    std::vector<std::size_t> hidden_;
    double dropout_ = 0.0;
    bool source_dependent_ = false;
    Eigen::VectorXd params_ = Eigen::VectorXd::Zero(1);
};

}  // namespace fuselab::gp
