#pragma once

#include <Eigen/Dense>
#include <functional>

namespace drglm {

enum class StepRule {
    Backtracking,  // Armijo line search; on quadratic objectives this
                   // specializes to the exact minimizing step in closed form.
    Fixed,         // constant learning rate `lr`
};

/// Settings for full-batch gradient descent. Convergence criterion is the
/// gradient infinity norm falling to `tol` or below.
struct GdConfig {
    StepRule step_rule = StepRule::Backtracking;
    double lr = 0.0;  // used only with StepRule::Fixed; must be > 0 then
    double tol = 1e-8;
    long max_iters = 100000;
    Eigen::VectorXd init;  // empty => zeros
};

struct GdResult {
    Eigen::VectorXd x;
    double grad_inf = 0.0;
    long iters = 0;
    bool converged = false;
};

/// Objective callback: fills `grad` and returns the value at `x`.
using ValueGrad = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Gradient descent on a generic (convex) objective.
/// Backtracking: Armijo with c=1e-4, halving, warm-started step size.
GdResult gd_minimize(const ValueGrad& objective, Eigen::Index dim, const GdConfig& cfg);

/// Gradient descent on the quadratic q(x) = x'Ax/2 - b'x, A symmetric PSD.
/// With StepRule::Backtracking the step is the exact line-search minimizer
/// t = g'g / g'Ag; the gradient is updated incrementally (one mat-vec per
/// iteration) and recomputed exactly every 64 steps to cancel drift.
GdResult gd_minimize_quadratic(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                               const GdConfig& cfg);

}  // namespace drglm
