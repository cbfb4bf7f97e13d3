#include "drglm/solvers.hpp"

#include <cmath>
#include <string>

#include "drglm/linreg.hpp"
#include "drglm/rng.hpp"
#include "drglm/util.hpp"

namespace drglm {

namespace {

constexpr std::uint64_t kSgdTag = 0x647267736764ULL;        // sgd stream low word
constexpr std::uint64_t kSaaTag = 0x647267736161ULL;        // saa stream high word
constexpr std::uint64_t kMlmcControlLo = ~std::uint64_t{0}; // replica control stream
constexpr int kLevelCapOffset = 40;

// phi by the delta=0 MLE convention: linear -> mean squared OLS residual
// (floored), unavailable when X'X is singular; other families -> 1.
std::optional<double> dispersion_from_delta0_fit(const GlmFamily& family, const Dataset& data) {
    if (family.kind != FamilyKind::Linear) return 1.0;
    try {
        const RidgeDropoutSolution ols = dropout_ridge(data, 0.0);
        const double ssr = (data.y - data.x * ols.beta).squaredNorm();
        return std::max(ssr / static_cast<double>(data.n()), 1e-12);
    } catch (const Error&) {
        return std::nullopt;
    }
}

void check_instance(const Dataset& data, const DropoutSpec& spec) {
    require(data.n() > 0, "solvers: empty dataset");
    require(spec.d() == data.d(), "solvers: spec and data dimensions disagree");
}

// Quadratic data of the exact linear dropout objective (unit dispersion):
//   (1/2) beta' A beta - b' beta,  A = (X'X + rho diag(X'X))/n,  b = X'y/n.
void linear_exact_quadratic(const Dataset& data, const DropoutSpec& spec, Eigen::MatrixXd& a,
                            Eigen::VectorXd& b) {
    const double n = static_cast<double>(data.n());
    a = data.x.transpose() * data.x;
    for (Eigen::Index j = 0; j < a.rows(); ++j)
        a(j, j) += spec.deltas[j] / (1.0 - spec.deltas[j]) * a(j, j);
    a /= n;
    b = data.x.transpose() * data.y / n;
}

// Sufficient statistics of a linear SAA objective, accumulated streamingly
// with blocked rank updates (lower triangle).
struct LinearSuffStats {
    explicit LinearSuffStats(Eigen::Index d)
        : s(Eigen::MatrixXd::Zero(d, d)),
          t(Eigen::VectorXd::Zero(d)),
          buf(d, kBlock) {}

    void add(const Eigen::VectorXd& xt, double y) {
        buf.col(fill++) = xt;
        t.noalias() += y * xt;
        ++count;
        if (fill == kBlock) flush();
    }

    void flush() {
        if (fill == 0) return;
        s.selfadjointView<Eigen::Lower>().rankUpdate(buf.leftCols(fill), 1.0);
        fill = 0;
    }

    Eigen::MatrixXd matrix() {
        flush();
        return Eigen::MatrixXd(s.selfadjointView<Eigen::Lower>()) / static_cast<double>(count);
    }
    Eigen::VectorXd vector() const { return t / static_cast<double>(count); }

    static constexpr int kBlock = 32;
    Eigen::MatrixXd s;
    Eigen::VectorXd t;
    Eigen::MatrixXd buf;
    int fill = 0;
    long count = 0;
};

GdResult solve_quadratic_or_fail(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                 GdConfig cfg, const Eigen::VectorXd& init, const char* who) {
    cfg.init = init;
    GdResult res = gd_minimize_quadratic(a, b, cfg);
    if (!res.converged)
        throw SolveFailure(std::string(who) + ": inner solve hit the iteration cap (grad inf-norm " +
                               format_double(res.grad_inf) + ")",
                           res.x);
    return res;
}

}  // namespace

ModelParams solve_exact_gd(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                           const GdConfig& cfg) {
    check_instance(data, spec);
    check_response(family, data);

    GdResult res;
    if (family.kind == FamilyKind::Linear) {
        Eigen::MatrixXd a;
        Eigen::VectorXd b;
        linear_exact_quadratic(data, spec, a, b);
        res = gd_minimize_quadratic(a, b, cfg);
    } else {
        const MaskEnumeration enumeration = enumerate_masks(spec);
        const Eigen::Index n = data.n();
        const double inv_n = 1.0 / static_cast<double>(n);
        const auto objective = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& grad) {
            double value = 0.0;
            grad.setZero();
            Eigen::VectorXd resid(n);
            for (size_t m = 0; m < enumeration.masks.size(); ++m) {
                const double prob = enumeration.probs[m];
                if (prob == 0.0) continue;
                const Mask& mask = enumeration.masks[m];
                const Eigen::VectorXd eta = data.x * mask.cwiseProduct(beta);
                double mask_value = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    mask_value += family.psi(eta[i]) - data.y[i] * eta[i];
                    resid[i] = family.psi_dot(eta[i]) - data.y[i];
                }
                value += prob * mask_value;
                grad.noalias() += prob * mask.cwiseProduct(data.x.transpose() * resid);
            }
            grad *= inv_n;
            return value * inv_n;
        };
        res = gd_minimize(objective, data.d(), cfg);
    }

    if (!res.converged)
        throw SolveFailure("solve_exact_gd: iteration cap exceeded (grad inf-norm " +
                               format_double(res.grad_inf) + ")",
                           res.x);

    ModelParams params;
    params.beta = res.x;
    params.phi = dispersion_from_delta0_fit(family, data).value_or(1.0);
    return params;
}

ModelParams solve_sgd(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      const SgdConfig& cfg) {
    check_instance(data, spec);
    check_response(family, data);
    require(cfg.lr > 0.0, "solve_sgd: lr must be positive");
    require(cfg.batch >= 1, "solve_sgd: batch must be at least 1");
    require(cfg.budget >= 0, "solve_sgd: budget must be nonnegative");

    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    Eigen::VectorXd beta = cfg.init.size() == 0 ? Eigen::VectorXd::Zero(d) : cfg.init;
    require(beta.size() == d, "solve_sgd: init vector has wrong dimension");

    RngStream rng(cfg.seed, kSgdTag, 0);
    Eigen::VectorXd grad(d), xt(d);
    long done = 0;
    while (done < cfg.budget) {
        const long b = std::min(cfg.batch, cfg.budget - done);
        grad.setZero();
        for (long k = 0; k < b; ++k) {
            long i = static_cast<long>(rng.uniform() * static_cast<double>(n));
            if (i >= n) i = n - 1;
            double eta = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                xt[j] = sample_mask_entry(spec, j, rng) * data.x(i, j);
                eta += xt[j] * beta[j];
            }
            grad.noalias() += (family.psi_dot(eta) - data.y[i]) * xt;
        }
        beta.noalias() -= cfg.lr / static_cast<double>(b) * grad;
        done += b;
        if (beta.lpNorm<Eigen::Infinity>() > 1e8) throw Error("solve_sgd: step size too large");
    }

    ModelParams params;
    params.beta = beta;
    params.phi = 1.0;
    return params;
}

ModelParams solve_saa(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      long masks_per_row, const GdConfig& inner, std::uint64_t seed) {
    check_instance(data, spec);
    check_response(family, data);
    require(masks_per_row >= 1, "solve_saa: masks_per_row must be at least 1");
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();

    GdResult res;
    if (family.kind == FamilyKind::Linear) {
        LinearSuffStats stats(d);
        Eigen::VectorXd xt(d);
        for (Eigen::Index i = 0; i < n; ++i) {
            RngStream rng(seed, kSaaTag, static_cast<std::uint64_t>(i));
            for (long k = 0; k < masks_per_row; ++k) {
                for (Eigen::Index j = 0; j < d; ++j)
                    xt[j] = sample_mask_entry(spec, j, rng) * data.x(i, j);
                stats.add(xt, data.y[i]);
            }
        }
        res = gd_minimize_quadratic(stats.matrix(), stats.vector(), inner);
    } else {
        require(n * masks_per_row * d <= 100'000'000,
                "solve_saa: masked design too large to materialize");
        Eigen::MatrixXd xtil(n * masks_per_row, d);
        Eigen::VectorXd ytil(n * masks_per_row);
        for (Eigen::Index i = 0; i < n; ++i) {
            RngStream rng(seed, kSaaTag, static_cast<std::uint64_t>(i));
            for (long k = 0; k < masks_per_row; ++k) {
                const Eigen::Index row = i * masks_per_row + k;
                for (Eigen::Index j = 0; j < d; ++j)
                    xtil(row, j) = sample_mask_entry(spec, j, rng) * data.x(i, j);
                ytil[row] = data.y[i];
            }
        }
        const double inv_rows = 1.0 / static_cast<double>(xtil.rows());
        const auto objective = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& grad) {
            const Eigen::VectorXd eta = xtil * beta;
            double value = 0.0;
            Eigen::VectorXd resid(eta.size());
            for (Eigen::Index row = 0; row < eta.size(); ++row) {
                value += family.psi(eta[row]) - ytil[row] * eta[row];
                resid[row] = family.psi_dot(eta[row]) - ytil[row];
            }
            grad.noalias() = xtil.transpose() * resid * inv_rows;
            return value * inv_rows;
        };
        res = gd_minimize(objective, d, inner);
    }

    if (!res.converged)
        throw SolveFailure("solve_saa: iteration cap exceeded (grad inf-norm " +
                               format_double(res.grad_inf) + ")",
                           res.x);

    ModelParams params;
    params.beta = res.x;
    params.phi = dispersion_from_delta0_fit(family, data).value_or(1.0);
    return params;
}

int sample_mlmc_level(const MlmcConfig& cfg, std::uint64_t replica) {
    RngStream control(cfg.master_seed, replica, kMlmcControlLo);
    const double u = control.uniform_pos();
    const int m = static_cast<int>(std::floor(std::log(u) / std::log(1.0 - cfg.r)));
    if (m > kLevelCapOffset)
        throw Error("mlmc_solve: sampled level m0+" + std::to_string(m) +
                    " exceeds the cap m0+" + std::to_string(kLevelCapOffset));
    return cfg.m0 + m;
}

namespace {

// One MLMC replica on the linear fast path: stream masks once, accumulating
// the even/odd-half and burn-in sufficient statistics.
MlmcReplica linear_replica(const Dataset& data, const DropoutSpec& spec, const MlmcConfig& cfg,
                           std::uint64_t replica, const Eigen::VectorXd& warm) {
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    const int level = sample_mlmc_level(cfg, replica);
    const long draws = 1L << (level + 1);
    const long burn = 1L << cfg.m0;

    LinearSuffStats even(d), odd(d), m0(d);
    Eigen::VectorXd xt(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        RngStream rng(cfg.master_seed, replica, static_cast<std::uint64_t>(i));
        for (long k = 0; k < draws; ++k) {
            for (Eigen::Index j = 0; j < d; ++j)
                xt[j] = sample_mask_entry(spec, j, rng) * data.x(i, j);
            ((k & 1) ? odd : even).add(xt, data.y[i]);
            if (k < burn) m0.add(xt, data.y[i]);
        }
    }

    const Eigen::MatrixXd a_even = even.matrix(), a_odd = odd.matrix(), a_m0 = m0.matrix();
    const Eigen::VectorXd b_even = even.vector(), b_odd = odd.vector(), b_m0 = m0.vector();
    const Eigen::MatrixXd a_full = (a_even + a_odd) / 2.0;
    const Eigen::VectorXd b_full = (b_even + b_odd) / 2.0;

    const char* who = "mlmc_solve";
    const Eigen::VectorXd theta_m0 = solve_quadratic_or_fail(a_m0, b_m0, cfg.inner, warm, who).x;
    const Eigen::VectorXd theta_e = solve_quadratic_or_fail(a_even, b_even, cfg.inner, theta_m0, who).x;
    const Eigen::VectorXd theta_o = solve_quadratic_or_fail(a_odd, b_odd, cfg.inner, theta_m0, who).x;
    const Eigen::VectorXd theta_f =
        solve_quadratic_or_fail(a_full, b_full, cfg.inner, ((theta_e + theta_o) / 2.0).eval(), who).x;

    MlmcReplica rep;
    rep.level = level;
    rep.draws_used = n * draws;
    rep.theta_m0 = theta_m0;
    rep.delta_bar = theta_f - (theta_e + theta_o) / 2.0;
    const double p = cfg.r * std::pow(1.0 - cfg.r, level - cfg.m0);
    rep.z = rep.delta_bar / p + theta_m0;
    return rep;
}

// General-family replica: materializes the masked draws and runs the inner
// descent on the four index subsets.
MlmcReplica general_replica(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                            const MlmcConfig& cfg, std::uint64_t replica,
                            const Eigen::VectorXd& warm) {
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();
    const int level = sample_mlmc_level(cfg, replica);
    const long draws = 1L << (level + 1);
    const long burn = 1L << cfg.m0;
    require(n * draws * d <= 100'000'000,
            "mlmc_solve: replica level too large to materialize for this family");

    Eigen::MatrixXd xtil(n * draws, d);
    Eigen::VectorXd ytil(n * draws);
    for (Eigen::Index i = 0; i < n; ++i) {
        RngStream rng(cfg.master_seed, replica, static_cast<std::uint64_t>(i));
        for (long k = 0; k < draws; ++k) {
            const Eigen::Index row = i * draws + k;
            for (Eigen::Index j = 0; j < d; ++j)
                xtil(row, j) = sample_mask_entry(spec, j, rng) * data.x(i, j);
            ytil[row] = data.y[i];
        }
    }

    // subset selectors over the within-row draw index k
    const auto solve_subset = [&](auto keep, const Eigen::VectorXd& init) {
        long subset_count = 0;
        for (long k = 0; k < draws; ++k)
            if (keep(k)) ++subset_count;
        const double inv = 1.0 / static_cast<double>(n * subset_count);
        const auto objective = [&, inv](const Eigen::VectorXd& beta, Eigen::VectorXd& grad) {
            double value = 0.0;
            grad.setZero();
            for (Eigen::Index i = 0; i < n; ++i) {
                for (long k = 0; k < draws; ++k) {
                    if (!keep(k)) continue;
                    const Eigen::Index row = i * draws + k;
                    const double eta = xtil.row(row).dot(beta);
                    value += family.psi(eta) - ytil[row] * eta;
                    grad.noalias() +=
                        (family.psi_dot(eta) - ytil[row]) * xtil.row(row).transpose();
                }
            }
            grad *= inv;
            return value * inv;
        };
        GdConfig inner = cfg.inner;
        inner.init = init;
        GdResult res = gd_minimize(objective, d, inner);
        if (!res.converged)
            throw SolveFailure("mlmc_solve: inner solve hit the iteration cap (grad inf-norm " +
                                   format_double(res.grad_inf) + ")",
                               res.x);
        return res.x;
    };

    const Eigen::VectorXd theta_m0 = solve_subset([&](long k) { return k < burn; }, warm);
    const Eigen::VectorXd theta_e = solve_subset([](long k) { return (k & 1) == 0; }, theta_m0);
    const Eigen::VectorXd theta_o = solve_subset([](long k) { return (k & 1) == 1; }, theta_m0);
    const Eigen::VectorXd theta_f =
        solve_subset([](long) { return true; }, ((theta_e + theta_o) / 2.0).eval());

    MlmcReplica rep;
    rep.level = level;
    rep.draws_used = n * draws;
    rep.theta_m0 = theta_m0;
    rep.delta_bar = theta_f - (theta_e + theta_o) / 2.0;
    const double p = cfg.r * std::pow(1.0 - cfg.r, level - cfg.m0);
    rep.z = rep.delta_bar / p + theta_m0;
    return rep;
}

}  // namespace

MlmcReport mlmc_solve(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      const MlmcConfig& cfg) {
    check_instance(data, spec);
    check_response(family, data);
    require(cfg.r > 0.5 && cfg.r < 1.0,
            "mlmc_solve: r must lie in (1/2, 1); finite variance additionally needs r < 3/4");
    require(cfg.m0 >= 0, "mlmc_solve: m0 must be nonnegative");
    require(cfg.replicas >= 1, "mlmc_solve: need at least one replica");

    const Eigen::Index d = data.d();
    // Warm start for the burn-in solves: the exact linear dropout solution
    // when available, zeros otherwise.  Init only affects iteration counts,
    // never the argmin an inner solve converges to.
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(d);
    if (family.kind == FamilyKind::Linear) {
        Eigen::MatrixXd a;
        Eigen::VectorXd b;
        linear_exact_quadratic(data, spec, a, b);
        GdConfig direct;
        direct.max_iters = 200000;
        const GdResult res = gd_minimize_quadratic(a, b, direct);
        if (res.converged) warm = res.x;
    }

    MlmcReport report;
    report.per_replica.resize(static_cast<size_t>(cfg.replicas));
    parallel_for(cfg.replicas, cfg.threads, [&](long l) {
        const std::uint64_t replica = static_cast<std::uint64_t>(l);
        report.per_replica[static_cast<size_t>(l)] =
            family.kind == FamilyKind::Linear
                ? linear_replica(data, spec, cfg, replica, warm)
                : general_replica(family, data, spec, cfg, replica, warm);
    });

    report.estimate = Eigen::VectorXd::Zero(d);
    report.total_draws = 0;
    for (const MlmcReplica& rep : report.per_replica) {
        report.estimate += rep.z;
        report.total_draws += rep.draws_used;
    }
    report.estimate /= static_cast<double>(cfg.replicas);

    report.empirical_variance = 0.0;
    if (cfg.replicas > 1) {
        for (const MlmcReplica& rep : report.per_replica)
            report.empirical_variance += (rep.z - report.estimate).squaredNorm();
        report.empirical_variance /= static_cast<double>(cfg.replicas - 1);
    }

    report.expected_cost_formula_value = static_cast<double>(data.n()) *
                                         std::pow(2.0, cfg.m0 + 1) * cfg.r / (2.0 * cfg.r - 1.0);
    report.phi_delta0 = dispersion_from_delta0_fit(family, data);
    return report;
}

}  // namespace drglm
