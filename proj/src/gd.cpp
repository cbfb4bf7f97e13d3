#include "drglm/gd.hpp"

#include <algorithm>
#include <cmath>

#include "drglm/util.hpp"

namespace drglm {

namespace {

Eigen::VectorXd make_init(const GdConfig& cfg, Eigen::Index dim) {
    if (cfg.init.size() == 0) return Eigen::VectorXd::Zero(dim);
    require(cfg.init.size() == dim, "gd: init vector has wrong dimension");
    return cfg.init;
}

void check_cfg(const GdConfig& cfg) {
    require(cfg.tol > 0.0, "gd: tol must be positive");
    require(cfg.max_iters >= 1, "gd: max_iters must be at least 1");
    if (cfg.step_rule == StepRule::Fixed) require(cfg.lr > 0.0, "gd: fixed lr must be positive");
}

}  // namespace

GdResult gd_minimize(const ValueGrad& objective, Eigen::Index dim, const GdConfig& cfg) {
    check_cfg(cfg);
    GdResult res;
    res.x = make_init(cfg, dim);
    Eigen::VectorXd grad(dim), trial(dim), trial_grad(dim);
    double value = objective(res.x, grad);
    double step = (cfg.step_rule == StepRule::Fixed) ? cfg.lr : 1.0;

    for (long it = 0; it < cfg.max_iters; ++it) {
        res.grad_inf = grad.lpNorm<Eigen::Infinity>();
        res.iters = it;
        if (res.grad_inf <= cfg.tol) {
            res.converged = true;
            return res;
        }
        if (cfg.step_rule == StepRule::Fixed) {
            res.x.noalias() -= step * grad;
            value = objective(res.x, grad);
            continue;
        }
        // Armijo backtracking; the accepted step seeds the next iteration
        // (doubled once) so well-scaled problems settle near the right step.
        const double gg = grad.squaredNorm();
        double t = step;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            trial = res.x - t * grad;
            const double trial_value = objective(trial, trial_grad);
            if (trial_value <= value - 1e-4 * t * gg) {
                res.x.swap(trial);
                grad.swap(trial_grad);
                value = trial_value;
                step = 2.0 * t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Step underflow: gradient no longer yields descent at ~1e-18
            // scale, i.e. we are at numerical stationarity.
            res.grad_inf = grad.lpNorm<Eigen::Infinity>();
            res.converged = res.grad_inf <= cfg.tol;
            return res;
        }
    }
    res.grad_inf = grad.lpNorm<Eigen::Infinity>();
    res.converged = res.grad_inf <= cfg.tol;
    res.iters = cfg.max_iters;
    return res;
}

GdResult gd_minimize_quadratic(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                               const GdConfig& cfg) {
    check_cfg(cfg);
    const Eigen::Index dim = b.size();
    require(A.rows() == dim && A.cols() == dim, "gd: quadratic dimensions disagree");

    GdResult res;
    res.x = make_init(cfg, dim);

    if (cfg.step_rule == StepRule::Fixed) {
        Eigen::VectorXd grad = A * res.x - b;
        for (long it = 0; it < cfg.max_iters; ++it) {
            res.grad_inf = grad.lpNorm<Eigen::Infinity>();
            res.iters = it;
            if (res.grad_inf <= cfg.tol) {
                res.converged = true;
                return res;
            }
            res.x.noalias() -= cfg.lr * grad;
            if ((it & 63) == 63)
                grad = A * res.x - b;  // cancel incremental drift
            else
                grad.noalias() -= cfg.lr * (A * grad).eval();
        }
        grad = A * res.x - b;
        res.grad_inf = grad.lpNorm<Eigen::Infinity>();
        res.converged = res.grad_inf <= cfg.tol;
        res.iters = cfg.max_iters;
        return res;
    }

    // Conjugate gradients on the residual r = b - A x (= -gradient). No
    // periodic restart: the full Krylov history is what delivers superlinear
    // convergence on the near-singular Gram matrices the masked subproblems
    // produce. The recurrence residual can drift from the true one, so a
    // convergence claim is only accepted after recomputing b - A x; on a
    // failed claim we resume from the refreshed residual.
    Eigen::VectorXd r = b - A * res.x;
    Eigen::VectorXd p = r, Ap(dim);
    double rr = r.squaredNorm();
    for (long it = 0; it < cfg.max_iters; ++it) {
        res.grad_inf = r.lpNorm<Eigen::Infinity>();
        res.iters = it;
        if (res.grad_inf <= cfg.tol) {
            r = b - A * res.x;
            res.grad_inf = r.lpNorm<Eigen::Infinity>();
            if (res.grad_inf <= cfg.tol) {
                res.converged = true;
                return res;
            }
            p = r;
            rr = r.squaredNorm();
        }
        Ap.noalias() = A * p;
        const double pAp = p.dot(Ap);
        if (pAp <= 0.0) {
            // Flat (or numerically indefinite) direction: the quadratic has no
            // curvature left along the search direction, nothing further to gain.
            r = b - A * res.x;
            res.grad_inf = r.lpNorm<Eigen::Infinity>();
            res.converged = res.grad_inf <= cfg.tol;
            return res;
        }
        const double t = rr / pAp;
        res.x.noalias() += t * p;
        r.noalias() -= t * Ap;
        const double rr_next = r.squaredNorm();
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    r = b - A * res.x;
    res.grad_inf = r.lpNorm<Eigen::Infinity>();
    res.converged = res.grad_inf <= cfg.tol;
    res.iters = cfg.max_iters;
    return res;
}

}  // namespace drglm
