#include "drglm/objective.hpp"

#include <cmath>
#include <vector>

#include "drglm/util.hpp"

namespace drglm {

namespace {

// Stream low-word tag for the MC objective so its draws never collide with
// data-generation streams keyed on (seed, row, 0).
constexpr std::uint64_t kMcObjectiveTag = 0x6d636f626aULL;  // "mcobj"

void check_objective_args(const Dataset& data, const ModelParams& params,
                          const DropoutSpec& spec) {
    require(data.n() > 0, "dropout objective: empty dataset");
    require(data.x.cols() == params.beta.size(), "dropout objective: beta dimension mismatch");
    require(spec.d() == data.d(), "dropout objective: spec dimension mismatch");
    require(params.phi > 0.0, "dropout objective: phi must be positive");
}

}  // namespace

DropoutObjectiveValue dropout_objective_exact(const GlmFamily& family, const Dataset& data,
                                              const ModelParams& params, const DropoutSpec& spec) {
    check_objective_args(data, params, spec);
    const Eigen::Index n = data.n();
    const MaskEnumeration enumeration = enumerate_masks(spec);
    const double a_phi = family.dispersion(params.phi);

    // (x_i .* xi)'beta = x_i'(xi .* beta): one n-vector of etas per mask.
    double acc = 0.0;
    for (size_t m = 0; m < enumeration.masks.size(); ++m) {
        const double prob = enumeration.probs[m];
        if (prob == 0.0) continue;
        const Eigen::VectorXd beta_masked = enumeration.masks[m].cwiseProduct(params.beta);
        const Eigen::VectorXd eta = data.x * beta_masked;
        double mask_acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            mask_acc += family.psi(eta[i]) - data.y[i] * eta[i];
        acc += prob * mask_acc;
    }
    acc /= a_phi * static_cast<double>(n);
    // -ln h does not depend on the mask; probabilities sum to one.
    for (Eigen::Index i = 0; i < n; ++i)
        acc -= family.log_base(data.y[i], params.phi) / static_cast<double>(n);

    DropoutObjectiveValue out;
    out.value = acc;
    out.method = ObjectiveMethod::Exact;
    return out;
}

DropoutObjectiveValue dropout_objective_mc(const GlmFamily& family, const Dataset& data,
                                           const ModelParams& params, const DropoutSpec& spec,
                                           long masks_per_row, std::uint64_t seed, int threads) {
    check_objective_args(data, params, spec);
    require(masks_per_row >= 1, "dropout_objective_mc: masks_per_row must be at least 1");
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    const double a_phi = family.dispersion(params.phi);

    std::vector<double> row_means(static_cast<size_t>(n));
    parallel_for(n, threads, [&](long i) {
        RngStream rng(seed, kMcObjectiveTag, static_cast<std::uint64_t>(i));
        const auto x_row = data.x.row(i);
        double acc = 0.0;
        for (long k = 0; k < masks_per_row; ++k) {
            double eta = 0.0;
            for (Eigen::Index j = 0; j < d; ++j)
                eta += sample_mask_entry(spec, j, rng) * x_row[j] * params.beta[j];
            acc += family.psi(eta) - data.y[i] * eta;
        }
        row_means[static_cast<size_t>(i)] =
            acc / (a_phi * static_cast<double>(masks_per_row)) -
            family.log_base(data.y[i], params.phi);
    });

    double value = 0.0;
    for (double rm : row_means) value += rm;
    value /= static_cast<double>(n);

    double std_err = 0.0;
    if (n > 1) {
        double ss = 0.0;
        for (double rm : row_means) ss += (rm - value) * (rm - value);
        std_err = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    }

    DropoutObjectiveValue out;
    out.value = value;
    out.method = ObjectiveMethod::MonteCarlo;
    out.mc_draws = masks_per_row;
    out.mc_std_err = std_err;
    return out;
}

Eigen::VectorXd dropout_score(const GlmFamily& family, const Dataset& data,
                              const Eigen::VectorXd& beta, const DropoutSpec& spec) {
    require(data.n() > 0, "dropout_score: empty dataset");
    require(data.x.cols() == beta.size() && spec.d() == data.d(),
            "dropout_score: dimension mismatch");
    const Eigen::Index n = data.n();
    const double inv_n = 1.0 / static_cast<double>(n);

    // S_n(beta) and the no-noise mean term share one pass.
    const Eigen::VectorXd eta0 = data.x * beta;
    Eigen::VectorXd w0(n);
    for (Eigen::Index i = 0; i < n; ++i) w0[i] = family.psi_dot(eta0[i]);
    const Eigen::VectorXd s_n = data.x.transpose() * (data.y - w0) * inv_n;

    // (1/n) sum_i E[(x_i.*xi) psi_dot(...)] = sum_masks prob * xi .* (X'w/n).
    const MaskEnumeration enumeration = enumerate_masks(spec);
    Eigen::VectorXd noise_mean = Eigen::VectorXd::Zero(beta.size());
    Eigen::VectorXd w(n);
    for (size_t m = 0; m < enumeration.masks.size(); ++m) {
        const double prob = enumeration.probs[m];
        if (prob == 0.0) continue;
        const Eigen::VectorXd beta_masked = enumeration.masks[m].cwiseProduct(beta);
        const Eigen::VectorXd eta = data.x * beta_masked;
        for (Eigen::Index i = 0; i < n; ++i) w[i] = family.psi_dot(eta[i]);
        noise_mean.noalias() +=
            prob * enumeration.masks[m].cwiseProduct(data.x.transpose() * w) * inv_n;
    }

    const Eigen::VectorXd clean_mean = data.x.transpose() * w0 * inv_n;
    return s_n - (noise_mean - clean_mean);
}

Eigen::MatrixXd dropout_hessian(const GlmFamily& family, const Dataset& data,
                                const Eigen::VectorXd& beta, const DropoutSpec& spec) {
    require(data.n() > 0, "dropout_hessian: empty dataset");
    require(data.x.cols() == beta.size() && spec.d() == data.d(),
            "dropout_hessian: dimension mismatch");
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();

    const MaskEnumeration enumeration = enumerate_masks(spec);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (size_t m = 0; m < enumeration.masks.size(); ++m) {
        const double prob = enumeration.probs[m];
        if (prob == 0.0) continue;
        const Mask& mask = enumeration.masks[m];
        const Eigen::VectorXd beta_masked = mask.cwiseProduct(beta);
        const Eigen::VectorXd eta = data.x * beta_masked;
        // sum_i w_i (x_i.*xi)(x_i.*xi)' = (xi xi') .* (X' W X)
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = family.psi_ddot(eta[i]);
        const Eigen::MatrixXd xtwx = data.x.transpose() * w.asDiagonal() * data.x;
        acc.noalias() += prob * (mask * mask.transpose()).cwiseProduct(xtwx);
    }
    return -acc / static_cast<double>(n);
}

Eigen::MatrixXd sigma_matrix(const GlmFamily& family, const Eigen::MatrixXd& sample_x,
                             const Eigen::VectorXd& beta) {
    require(sample_x.rows() > 0, "sigma_matrix: empty sample");
    require(sample_x.cols() == beta.size(), "sigma_matrix: dimension mismatch");
    const Eigen::VectorXd eta = sample_x * beta;
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) w[i] = family.psi_ddot(eta[i]);
    Eigen::MatrixXd sigma =
        sample_x.transpose() * w.asDiagonal() * sample_x / static_cast<double>(sample_x.rows());
    return (sigma + sigma.transpose()) / 2.0;  // kill roundoff asymmetry
}

Eigen::VectorXd asymptotic_bias_mu(const GlmFamily& family, const Dataset& sample_xy,
                                   const Eigen::VectorXd& beta_star) {
    require(sample_xy.n() > 0, "asymptotic_bias_mu: empty sample");
    require(sample_xy.x.cols() == beta_star.size(), "asymptotic_bias_mu: dimension mismatch");
    const Eigen::Index n = sample_xy.n();
    const Eigen::Index d = sample_xy.d();
    const double inv_n = 1.0 / static_cast<double>(n);

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd w(n);
    for (const Eigen::VectorXd& mask : one_zero_masks(d)) {
        const Eigen::VectorXd beta_masked = mask.cwiseProduct(beta_star);
        const Eigen::VectorXd eta = sample_xy.x * beta_masked;
        for (Eigen::Index i = 0; i < n; ++i) w[i] = family.psi_dot(eta[i]);
        mu.noalias() += mask.cwiseProduct(sample_xy.x.transpose() * w) * inv_n;
    }
    mu.noalias() -= static_cast<double>(d - 1) *
                    (sample_xy.x.transpose() * sample_xy.y) * inv_n;
    mu.noalias() += sigma_matrix(family, sample_xy.x, beta_star) * beta_star;
    return mu;
}

double first_order_residual(const GlmFamily& family, const Dataset& sample_xy,
                            const Eigen::VectorXd& beta_star) {
    require(sample_xy.n() > 0, "first_order_residual: empty sample");
    const Eigen::Index n = sample_xy.n();
    const Eigen::VectorXd eta = sample_xy.x * beta_star;
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = sample_xy.y[i] - family.psi_dot(eta[i]);
    return (sample_xy.x.transpose() * resid / static_cast<double>(n))
        .lpNorm<Eigen::Infinity>();
}

}  // namespace drglm
