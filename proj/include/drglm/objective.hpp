#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "drglm/dropout.hpp"
#include "drglm/glm.hpp"

namespace drglm {

enum class ObjectiveMethod { Exact, MonteCarlo };

struct DropoutObjectiveValue {
    double value = 0.0;
    ObjectiveMethod method = ObjectiveMethod::Exact;
    long mc_draws = 0;                      // masks per row when Monte Carlo
    std::optional<double> mc_std_err;       // absent for exact evaluation
};

// The asymptotic objects of the dropout estimator, bundled for reporting.
struct AsymptoticQuantities {
    Eigen::MatrixXd sigma_mat;  // Sigma(beta) = E[psi_ddot(X'beta) X X']
    Eigen::VectorXd bias_mu;    // first-order bias direction mu
    Eigen::VectorXd score;      // S~_n(beta)
    Eigen::MatrixXd hessian;    // H~_n(beta), negative semidefinite
};

// Exact dropout objective: (1/n) sum_i sum_masks prob(xi) * loss(x_i .* xi, y_i, theta).
// Everything here is in minimization form (average negative log-likelihood
// under mask noise).
DropoutObjectiveValue dropout_objective_exact(const GlmFamily& family, const Dataset& data,
                                              const ModelParams& params, const DropoutSpec& spec);

// Monte Carlo counterpart with masks_per_row i.i.d. masks per observation.
// Each row gets its own counter-derived stream keyed on (seed, row), so the
// result is independent of the number of threads.  The std err pools
// between-row and within-row variation of the row-averaged loss terms.
DropoutObjectiveValue dropout_objective_mc(const GlmFamily& family, const Dataset& data,
                                           const ModelParams& params, const DropoutSpec& spec,
                                           long masks_per_row, std::uint64_t seed,
                                           int threads = 1);

// Score of the maximized dropout objective Q_n at beta:
//   S~_n(beta) = S_n(beta) - [(1/n) sum_i E[(x_i.*xi) psi_dot(beta'(x_i.*xi))]
//                              - x_i psi_dot(x_i'beta)],
// with S_n(beta) = (1/n) sum_i x_i (y_i - psi_dot(x_i'beta)).  The minimized
// loss objective has gradient -S~_n(beta)/a(phi).
Eigen::VectorXd dropout_score(const GlmFamily& family, const Dataset& data,
                              const Eigen::VectorXd& beta, const DropoutSpec& spec);

// H~_n(beta) = -(1/n) sum_i E[psi_ddot((x_i.*xi)'beta) (x_i.*xi)(x_i.*xi)'].
Eigen::MatrixXd dropout_hessian(const GlmFamily& family, const Dataset& data,
                                const Eigen::VectorXd& beta, const DropoutSpec& spec);

// Empirical Sigma(beta) = mean over sample rows of psi_ddot(x'beta) x x'.
Eigen::MatrixXd sigma_matrix(const GlmFamily& family, const Eigen::MatrixXd& sample_x,
                             const Eigen::VectorXd& beta);

// Empirical first-order bias direction
//   mu = sum_{xi in A} E[psi_dot((X.*xi)'beta*) (X.*xi)] - (d-1) E[YX]
//        + Sigma(beta*) beta*,
// with A the one-zero binary masks and expectations replaced by sample means.
Eigen::VectorXd asymptotic_bias_mu(const GlmFamily& family, const Dataset& sample_xy,
                                   const Eigen::VectorXd& beta_star);

// Diagnostic: inf-norm of E[YX] - E[psi_dot(X'beta*) X] on the sample.  Zero
// (up to sampling noise) exactly when beta* satisfies the population
// first-order condition the bias formula assumes.
double first_order_residual(const GlmFamily& family, const Dataset& sample_xy,
                            const Eigen::VectorXd& beta_star);

}  // namespace drglm
