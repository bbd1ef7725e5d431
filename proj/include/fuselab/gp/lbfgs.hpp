#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace fuselab::gp {

struct LbfgsOptions {
    int max_iterations = 200;
    int history = 10;
    double gradient_tolerance = 1e-6;   // on the projected gradient, inf-norm
    double function_tolerance = 1e-12;  // relative decrease per iteration
    double armijo = 1e-4;
    int max_backtracks = 40;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> trace;  // objective after each accepted step, starting at x0
};

// Objective returns f(x) and writes the gradient; +inf marks an infeasible point.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Limited-memory BFGS with box constraints handled by projection:
/// directions are computed on the free variables and every trial point is
/// clamped into the box. Armijo backtracking keeps the trace monotone.
inline LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper, const LbfgsOptions& opt = {}) {
    const Eigen::Index n = x0.size();
    auto project = [&](Eigen::VectorXd v) {
        for (Eigen::Index i = 0; i < n; ++i) v[i] = std::clamp(v[i], lower[i], upper[i]);
        return v;
    };

    // Variables with lo == hi are constants; their gradient is dropped so
    // that it does not leak into the curvature pairs.
    auto eval = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
        const double value = f(v, grad);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (lower[i] == upper[i]) grad[i] = 0.0;
        }
        return value;
    };

    LbfgsResult res;
    Eigen::VectorXd x = project(std::move(x0));
    Eigen::VectorXd g(n);
    double fx = eval(x, g);
    ++res.evaluations;
    res.x = x;
    res.value = fx;
    if (!std::isfinite(fx)) return res;
    res.trace.push_back(fx);

    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    std::deque<double> rho_hist;

    auto active = [&](Eigen::Index i, double gi) {
        const double span = std::max(1.0, upper[i] - lower[i]) * 1e-12;
        return (x[i] <= lower[i] + span && gi > 0.0) || (x[i] >= upper[i] - span && gi < 0.0);
    };

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        Eigen::VectorXd pg = g;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active(i, g[i])) pg[i] = 0.0;
        }
        if (pg.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
            res.converged = true;
            break;
        }

        // two-loop recursion on the free subspace
        Eigen::VectorXd q = pg;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        if (!s_hist.empty()) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        } else {
            q *= std::min(1.0, 1.0 / pg.norm());
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(q);
            q += (alpha[k] - beta) * s_hist[k];
        }
        Eigen::VectorXd d = -q;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (pg[i] == 0.0 && active(i, g[i])) d[i] = 0.0;
        }
        if (d.dot(pg) >= 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -pg * std::min(1.0, 1.0 / pg.norm());
        }

        double t = 1.0;
        Eigen::VectorXd x_new;
        Eigen::VectorXd g_new(n);
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int b = 0; b < opt.max_backtracks; ++b) {
            x_new = project(x + t * d);
            f_new = eval(x_new, g_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= fx + opt.armijo * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (s_hist.empty()) break;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        res.iterations = iter + 1;
        res.trace.push_back(fx);
        if (decrease <= opt.function_tolerance * std::max(1.0, std::abs(fx))) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.value = fx;
    return res;
}

}  // namespace fuselab::gp
