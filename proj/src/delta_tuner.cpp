#include "drglm/delta_tuner.hpp"

#include <cmath>
#include <vector>

#include "drglm/objective.hpp"
#include "drglm/util.hpp"

namespace drglm {

namespace {

constexpr std::uint64_t kPopLossTag = 0x706f706c6fULL;  // population-loss stream
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Shared kernel of mu_general and the loss-shift:
//   sum_{xi in A} E_n[psi((x.*xi)'b)] - d E_n[psi(x'b)] + E_n[y x'] b.
double mu_kernel(const GlmFamily& family, const Dataset& sample, const Eigen::VectorXd& beta) {
    require(sample.n() > 0, "mu_general: empty sample");
    require(sample.x.cols() == beta.size(), "mu_general: dimension mismatch");
    const Eigen::Index n = sample.n();
    const Eigen::Index d = sample.d();
    const double inv_n = 1.0 / static_cast<double>(n);

    double acc = 0.0;
    for (const Eigen::VectorXd& mask : one_zero_masks(d)) {
        const Eigen::VectorXd eta = sample.x * mask.cwiseProduct(beta);
        for (Eigen::Index i = 0; i < n; ++i) acc += family.psi(eta[i]);
    }
    const Eigen::VectorXd eta0 = sample.x * beta;
    for (Eigen::Index i = 0; i < n; ++i)
        acc -= static_cast<double>(d) * family.psi(eta0[i]) - sample.y[i] * eta0[i];
    return acc * inv_n;
}

}  // namespace

LossReport in_sample_loss(const GlmFamily& family, const Dataset& data, const ModelParams& params,
                          const DropoutSpec& spec, std::uint64_t seed, long mc_draws) {
    LossReport report;
    report.baseline = avg_neg_loglik(family, data, params);

    if (family.kind == FamilyKind::Linear) {
        // closed form: baseline + beta' diag(rho_j Lambda_jj) beta / (2 n phi)
        require(spec.d() == data.d(), "in_sample_loss: spec dimension mismatch");
        double penalty = 0.0;
        for (Eigen::Index j = 0; j < data.d(); ++j) {
            const double rho = spec.deltas[j] / (1.0 - spec.deltas[j]);
            penalty += rho * data.x.col(j).squaredNorm() * params.beta[j] * params.beta[j];
        }
        report.in_sample =
            report.baseline + penalty / (2.0 * static_cast<double>(data.n()) * params.phi);
    } else if (data.d() <= 24) {
        report.in_sample = dropout_objective_exact(family, data, params, spec).value;
    } else {
        const DropoutObjectiveValue mc =
            dropout_objective_mc(family, data, params, spec, mc_draws, seed);
        report.in_sample = mc.value;
        report.mc_std_err = mc.mc_std_err;
    }
    report.mu_n = report.in_sample - report.baseline;
    return report;
}

McEstimate population_loss_mc(const GlmFamily& family, const RowGenerator& generator,
                              const ModelParams& params_true, long sample_size,
                              std::uint64_t seed) {
    require(sample_size >= 1, "population_loss_mc: sample_size must be at least 1");
    RngStream rng(seed, kPopLossTag, 0);
    std::vector<double> terms(static_cast<size_t>(sample_size));
    for (long i = 0; i < sample_size; ++i) {
        const auto [x, y] = generator(rng);
        terms[static_cast<size_t>(i)] = loss(family, x, y, params_true);
    }
    McEstimate est;
    for (double t : terms) est.value += t;
    est.value /= static_cast<double>(sample_size);
    if (sample_size > 1) {
        double ss = 0.0;
        for (double t : terms) ss += (t - est.value) * (t - est.value);
        est.std_err = std::sqrt(ss / static_cast<double>(sample_size - 1) /
                                static_cast<double>(sample_size));
    }
    return est;
}

double mu_linear(const Eigen::VectorXd& second_moments_diag, const Eigen::VectorXd& beta_star,
                 double phi_star) {
    require(phi_star > 0.0, "mu_linear: phi_star must be positive");
    require(second_moments_diag.size() == beta_star.size(), "mu_linear: dimension mismatch");
    return second_moments_diag.cwiseProduct(beta_star.cwiseAbs2()).sum() / (2.0 * phi_star);
}

double mu_general(const GlmFamily& family, const Dataset& sample_xy,
                  const Eigen::VectorXd& beta_star, double phi_star) {
    require(phi_star > 0.0, "mu_general: phi_star must be positive");
    return mu_kernel(family, sample_xy, beta_star) / family.dispersion(phi_star);
}

double sigma_linear(double phi_star, const Eigen::VectorXd& sample_residuals) {
    require(phi_star > 0.0, "sigma_linear: phi_star must be positive");
    require(sample_residuals.size() >= 2, "sigma_linear: variance undefined for fewer than 2 points");
    const Eigen::Index n = sample_residuals.size();
    Eigen::VectorXd terms(n);
    for (Eigen::Index i = 0; i < n; ++i)
        terms[i] = 0.5 * std::log(kTwoPi * phi_star) +
                   sample_residuals[i] * sample_residuals[i] / (2.0 * phi_star);
    const double mean = terms.mean();
    return std::sqrt((terms.array() - mean).square().sum() / static_cast<double>(n - 1));
}

DeltaChoice choose_delta(double alpha, long n, double mu_hat, double sigma_hat) {
    require(alpha > 0.0 && alpha < 1.0, "choose_delta: alpha must lie in (0,1)");
    require(n >= 1, "choose_delta: n must be at least 1");
    require(sigma_hat >= 0.0, "choose_delta: sigma must be nonnegative");
    if (mu_hat <= 0.0) throw Error("choose_delta: tuning rule undefined: mu must be positive");

    DeltaChoice choice;
    choice.alpha = alpha;
    choice.mu_hat = mu_hat;
    choice.sigma_hat = sigma_hat;
    choice.n = n;
    choice.z_quantile = normal_quantile(1.0 - alpha);
    choice.c = choice.z_quantile * sigma_hat / mu_hat;
    choice.delta =
        std::min(std::max(choice.c / std::sqrt(static_cast<double>(n)), 0.0), kDeltaCap);
    return choice;
}

double asymptotic_loss_shift_delta(const GlmFamily& family, const Dataset& sample_xy,
                                   const Eigen::VectorXd& beta_star, double phi_star, double c) {
    const double shift = c * mu_kernel(family, sample_xy, beta_star);
    // consistency with the mu estimator (shared kernel, so this is exact)
    const double via_mu =
        c * mu_general(family, sample_xy, beta_star, phi_star) * family.dispersion(phi_star);
    require(std::abs(shift - via_mu) <= 1e-12 * std::max(1.0, std::abs(shift)),
            "asymptotic_loss_shift_delta: kernel consistency check failed");
    return shift;
}

}  // namespace drglm
