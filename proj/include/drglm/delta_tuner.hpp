#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

#include "drglm/dropout.hpp"
#include "drglm/glm.hpp"
#include "drglm/rng.hpp"

namespace drglm {

// In-sample dropout loss L_n(beta, phi, delta), its delta=0 baseline, and the
// gap mu_n = L_n(delta) - L_n(0) (nonnegative by worst-case dominance).
struct LossReport {
    double in_sample = 0.0;
    double baseline = 0.0;
    double mu_n = 0.0;
    std::optional<double> population;  // L(beta*, phi*) when the caller knows it
    std::optional<double> mc_std_err;  // set when the Monte Carlo fallback ran
};

// Exact when feasible (linear closed form at any d, enumeration for d <= 24);
// otherwise a Monte Carlo fallback with mc_draws masks per row, std err
// reported.  `seed` only matters on the fallback path.
LossReport in_sample_loss(const GlmFamily& family, const Dataset& data, const ModelParams& params,
                          const DropoutSpec& spec, std::uint64_t seed = 0, long mc_draws = 20000);

struct McEstimate {
    double value = 0.0;
    double std_err = 0.0;
};

// Draws one (x, y) observation from P*.
using RowGenerator = std::function<std::pair<Eigen::VectorXd, double>(RngStream&)>;

// Monte Carlo estimate of the population loss E_{P*}[-ln f(Y|X, beta, phi)].
McEstimate population_loss_mc(const GlmFamily& family, const RowGenerator& generator,
                              const ModelParams& params_true, long sample_size,
                              std::uint64_t seed);

// Linear-model mu = (1/(2 phi*)) sum_j E[X_j^2] (beta*_j)^2.
double mu_linear(const Eigen::VectorXd& second_moments_diag, const Eigen::VectorXd& beta_star,
                 double phi_star);

// General-family plug-in estimate of
//   mu = (sum_{xi in A} E[psi((X.*xi)'b*)] - d E[psi(X'b*)] + E[YX']b*) / a(phi*)
// from a sample of P*.
double mu_general(const GlmFamily& family, const Dataset& sample_xy,
                  const Eigen::VectorXd& beta_star, double phi_star);

// Sample standard deviation of the per-observation loss terms
// 0.5 ln(2 pi phi*) + r_i^2/(2 phi*); tends to sqrt(1/2) for Gaussian
// residuals.
double sigma_linear(double phi_star, const Eigen::VectorXd& sample_residuals);

inline constexpr double kDeltaCap = 0.9;

struct DeltaChoice {
    double alpha = 0.0;
    double mu_hat = 0.0;
    double sigma_hat = 0.0;
    double c = 0.0;        // z_{1-alpha} * sigma_hat / mu_hat
    double delta = 0.0;    // clip(c / sqrt(n), 0, kDeltaCap)
    long n = 0;
    double z_quantile = 0.0;
};

// The tuning rule delta = c/sqrt(n) with c = z_{1-alpha} sigma/mu.
DeltaChoice choose_delta(double alpha, long n, double mu_hat, double sigma_hat);

// First-order in-sample loss shift Delta = c * a(phi*) * mu; shares its kernel
// with mu_general and verifies Delta / a(phi*) == c * mu internally.
double asymptotic_loss_shift_delta(const GlmFamily& family, const Dataset& sample_xy,
                                   const Eigen::VectorXd& beta_star, double phi_star, double c);

}  // namespace drglm
