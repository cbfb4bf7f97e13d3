#pragma once

#include <Eigen/Dense>

#include "drglm/glm.hpp"

namespace drglm {

// Closed-form dropout solution for the linear model: the ridge-type system
//   (X'X + delta/(1-delta) * diag(X'X)) beta = X'Y.
struct RidgeDropoutSolution {
    Eigen::VectorXd beta;
    Eigen::VectorXd lambda_diag;  // diag(X'X), nonnegative
    double delta = 0.0;
};

// Solves the system above via a symmetric eigen-factorization with one step
// of iterative refinement; residual is held to <= 1e-10 relative to |X'Y|.
// delta = 0 with rank-deficient X errors (no pseudo-inverse fallback).
RidgeDropoutSolution dropout_ridge(const Dataset& data, double delta);

// Population limit beta*(delta) = (E[XX'] + delta/(1-delta) diag(E[XX']))^{-1} E[YX].
Eigen::VectorXd population_limit_lr(const Eigen::MatrixXd& second_moment,
                                    const Eigen::VectorXd& cross_moment, double delta);

}  // namespace drglm
