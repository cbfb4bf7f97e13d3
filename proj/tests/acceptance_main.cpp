// End-to-end acceptance gate.  Each numbered check prints exactly one
// PASS/FAIL line with the measured quantities; the exit code is the number
// of failed checks.  argv[1] is the path to the drglm CLI binary.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "drglm/delta_tuner.hpp"
#include "drglm/dropout.hpp"
#include "drglm/glm.hpp"
#include "drglm/harness.hpp"
#include "drglm/linreg.hpp"
#include "drglm/objective.hpp"
#include "drglm/rng.hpp"
#include "drglm/solvers.hpp"

using namespace drglm;

namespace {

double now_s() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

int run_cmd(const std::string& cli, const std::string& args) {
    return std::system((cli + " " + args + " > /dev/null").c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("acceptance: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double csv_lookup(const std::string& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw Error("acceptance: cannot read '" + path + "'");
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(name + ",", 0) == 0) return std::strtod(line.c_str() + name.size() + 1, nullptr);
    throw Error("acceptance: no '" + name + "' row in " + path);
}

const ResultRow& result_lookup(const ExperimentResult& result, const std::string& config,
                               const std::string& metric) {
    for (const auto& row : result.rows)
        if (row.config_id == config && row.metric == metric) return row;
    throw Error("acceptance: missing result row " + config + "/" + metric);
}

Dataset logistic_data(long n, long d, std::uint64_t seed) {
    Dataset data;
    data.x.resize(n, d);
    data.y.resize(n);
    Eigen::VectorXd beta(d);
    for (long j = 0; j < d; ++j) beta[j] = (j % 2 == 0 ? 0.8 : -0.8);
    RngStream rng(seed, 0, 0);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < d; ++j) data.x(i, j) = rng.normal();
        const double eta = data.x.row(i).dot(beta);
        const double p = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta))
                                    : std::exp(eta) / (1.0 + std::exp(eta));
        data.y[i] = rng.uniform() < p ? 1.0 : 0.0;
    }
    return data;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-drglm-cli>\n");
        return 127;
    }
    const std::string cli = argv[1];
    int failures = 0;

    const auto check = [&](int idx, const char* name,
                           const std::function<std::pair<bool, std::string>()>& body) {
        bool ok = false;
        std::string detail;
        try {
            auto res = body();
            ok = res.first;
            detail = std::move(res.second);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("%s: %2d %s%s%s\n", ok ? "PASS" : "FAIL", idx, name,
                    detail.empty() ? "" : " | ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    };

    // 1 — the tuning rule through the CLI, analytic mode
    check(1, "delta tuning rule (CLI oracle mode)", [&]() -> std::pair<bool, std::string> {
        const std::string out = "acc1_tune.csv";
        const double t0 = now_s();
        const int rc = run_cmd(cli, "tune-delta --alpha 0.1 --mode oracle --n 50 --d 100 "
                                    "--beta0 1 --noise-sd 10 --out " + out);
        const double elapsed = now_s() - t0;
        const double delta = csv_lookup(out, "delta");
        std::remove(out.c_str());
        std::remove((out + ".manifest.json").c_str());
        const bool ok = rc == 0 && delta >= 0.2558 && delta <= 0.2568 && elapsed < 1.0;
        return {ok, "delta=" + fmt(delta) + " in [0.2558,0.2568], " + fmt(elapsed) + "s"};
    });

    // 2 — coverage table at desk scale
    check(2, "coverage of the population loss", [&]() -> std::pair<bool, std::string> {
        CoverageConfig cfg;  // n=1000, d=10, alphas {0.2,0.1,0.05}, 500 reps, noise_sd 10
        cfg.seed = 1;
        const ExperimentResult res = run_coverage(cfg);
        const double targets[3] = {0.77, 0.88, 0.94};
        bool ok = true;
        std::string detail;
        for (int a = 0; a < 3; ++a) {
            const std::string id =
                "n=1000;alpha=" + format_double(cfg.alpha_list[a]) + ";method=dropout-oracle";
            const double cov = result_lookup(res, id, "coverage").value;
            ok = ok && std::abs(cov - targets[a]) <= 0.05;
            detail += fmt(cov) + "/" + fmt(targets[a]) + " ";
        }
        const double ols = result_lookup(res, "n=1000;method=ols", "coverage").value;
        ok = ok && ols <= 0.55;
        return {ok, "coverage vs target " + detail + "(tol 0.05), ols=" + fmt(ols) + " <= 0.55"};
    });

    // 3 — unbiasedness of the multilevel estimator plus its cost law
    check(3, "mlmc unbiasedness and expected cost", [&]() -> std::pair<bool, std::string> {
        SimSpec sim;
        sim.n = 30;
        sim.d = 20;
        sim.beta0 = Eigen::VectorXd::Ones(20);
        sim.noise_sd = 1.0;
        sim.seed = 101;
        const Dataset data = gen_linear_data(sim);
        const auto fam = make_family(FamilyKind::Linear);
        const DropoutSpec spec = make_dropout_spec(20, 0.26);
        const Eigen::VectorXd exact = dropout_ridge(data, 0.26).beta;

        MlmcConfig cfg;
        cfg.r = 0.646447;
        cfg.m0 = 3;
        cfg.replicas = 2000;
        cfg.master_seed = 12;
        const MlmcReport rep = mlmc_solve(fam, data, spec, cfg);

        const double L = static_cast<double>(cfg.replicas);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(20), m2 = Eigen::VectorXd::Zero(20);
        for (const auto& r : rep.per_replica) mean += r.z;
        mean /= L;
        for (const auto& r : rep.per_replica) m2 += (r.z - mean).cwiseAbs2();
        const Eigen::VectorXd sd = (m2 / (L - 1.0)).cwiseSqrt();
        double worst = 0.0;
        for (int j = 0; j < 20; ++j)
            worst = std::max(worst, std::abs(mean[j] - exact[j]) / (3.0 * sd[j] / std::sqrt(L)));
        const double avg_draws = static_cast<double>(rep.total_draws) / L;
        const double cost_rel =
            std::abs(avg_draws - rep.expected_cost_formula_value) / rep.expected_cost_formula_value;
        const bool ok = worst <= 1.0 && cost_rel <= 0.05;
        return {ok, "max |mean(Z)-beta|/(3 std/sqrt(L))=" + fmt(worst) +
                        " <= 1, draws/replica off formula by " + fmt(100.0 * cost_rel) +
                        "% <= 5%"};
    });

    // 4 — the scaled-Bernoulli law is worst case among feasible product laws
    check(4, "worst-case certification", [&]() -> std::pair<bool, std::string> {
        SimSpec sim;
        sim.n = 25;
        sim.d = 6;
        sim.beta0 = Eigen::VectorXd::Ones(6);
        sim.noise_sd = 1.0;
        sim.seed = 44;
        const Dataset data = gen_linear_data(sim);
        const auto fam = make_family(FamilyKind::Linear);
        const double delta = 0.3;
        const DropoutSpec spec = make_dropout_spec(6, delta);
        RngStream brng(4, 0, 0);
        Eigen::VectorXd beta(6);
        for (int j = 0; j < 6; ++j) beta[j] = brng.normal() / std::sqrt(6.0);
        const ModelParams params{beta, 1.0};
        RngStream crng(4, 1, 0);
        const CertifyReport report = certify_least_favorable(fam, data, spec, params, 200, crng);

        // one-dimensional adversary: the grid optimum must sit at the endpoint
        // Bernoulli law for convex integrands
        RngStream frng(4, 2, 0);
        const double upper = 1.0 / (1.0 - delta);
        double max_dev = 0.0;
        for (int k = 0; k < 50; ++k) {
            const double a = 0.1 + 4.0 * frng.uniform();
            const double b = 2.0 * upper * frng.uniform() - 0.5;
            const double c0 = 2.0 * frng.uniform() - 1.0;
            std::function<double(double)> f;
            switch (k % 3) {
                case 0: f = [=](double t) { return a * (t - b) * (t - b) + c0; }; break;
                case 1: f = [=](double t) { return a * std::abs(t - b) + c0; }; break;
                default: f = [=](double t) { return a * std::exp(t - b) + c0; }; break;
            }
            const double grid_best = adversary_value(f, delta, 1001).first;
            const double endpoint = delta * f(0.0) + (1.0 - delta) * f(upper);
            max_dev = std::max(max_dev, std::abs(grid_best - endpoint));
        }
        const bool ok = report.trials == 200 && report.max_violation <= 1e-9 && max_dev <= 1e-9;
        return {ok, "max violation over 200 product laws " + fmt(report.max_violation) +
                        " <= 1e-9, adversary grid-vs-endpoint dev " + fmt(max_dev) + " <= 1e-9"};
    });

    // 5 — exact linear objective equals its penalized closed form
    check(5, "closed-form equivalence (linear)", [&]() -> std::pair<bool, std::string> {
        SimSpec sim;
        sim.n = 40;
        sim.d = 8;
        sim.beta0 = Eigen::VectorXd::Ones(8);
        sim.noise_sd = 1.0;
        sim.seed = 55;
        const Dataset data = gen_linear_data(sim);
        const auto fam = make_family(FamilyKind::Linear);
        const Eigen::VectorXd lambda =
            data.x.colwise().squaredNorm().transpose();  // diag(X'X)
        RngStream rng(5, 0, 0);
        double max_gap = 0.0;
        for (int probe = 0; probe < 100; ++probe) {
            Eigen::VectorXd beta(8);
            for (int j = 0; j < 8; ++j) beta[j] = rng.normal();
            const double delta = 0.9 * rng.uniform();
            const double phi = 0.5 + 1.5 * rng.uniform();
            const DropoutSpec spec = make_dropout_spec(8, delta);
            const ModelParams params{beta, phi};
            const double exact_val = dropout_objective_exact(fam, data, params, spec).value;
            const double rho = delta / (1.0 - delta);
            const double sse = (data.y - data.x * beta).squaredNorm();
            const double penalty = rho * lambda.cwiseProduct(beta.cwiseAbs2()).sum();
            const double closed = 0.5 * std::log(2.0 * M_PI * phi) +
                                  (sse + penalty) / (2.0 * static_cast<double>(data.n()) * phi);
            max_gap = std::max(max_gap, std::abs(exact_val - closed));
        }
        const DropoutSpec spec = make_dropout_spec(8, 0.3);
        const Eigen::VectorXd via_gd = solve_exact_gd(fam, data, spec).beta;
        const Eigen::VectorXd via_ridge = dropout_ridge(data, 0.3).beta;
        const double solver_gap = (via_gd - via_ridge).lpNorm<Eigen::Infinity>();
        const bool ok = max_gap <= 1e-10 && solver_gap <= 1e-6;
        return {ok, "100-probe objective gap " + fmt(max_gap) + " <= 1e-10, solver gap " +
                        fmt(solver_gap) + " <= 1e-6"};
    });

    // 6 — score and hessian against central finite differences
    check(6, "derivative correctness", [&]() -> std::pair<bool, std::string> {
        const auto check_family = [&](const GlmFamily& fam, const Dataset& data,
                                      std::uint64_t bseed) -> std::pair<double, double> {
            const Eigen::Index d = data.d();
            RngStream rng(bseed, 0, 0);
            Eigen::VectorXd beta(d);
            for (Eigen::Index j = 0; j < d; ++j) beta[j] = 0.5 * rng.normal();
            const DropoutSpec spec = make_dropout_spec(d, 0.3);

            // the minimized exact objective at phi = 1 has gradient -score
            const auto obj = [&](const Eigen::VectorXd& b) {
                return dropout_objective_exact(fam, data, ModelParams{b, 1.0}, spec).value;
            };
            const Eigen::VectorXd score = dropout_score(fam, data, beta, spec);
            const double hs = 1e-6;
            Eigen::VectorXd fd_score(d);
            for (Eigen::Index j = 0; j < d; ++j) {
                Eigen::VectorXd hi = beta, lo = beta;
                hi[j] += hs;
                lo[j] -= hs;
                fd_score[j] = -(obj(hi) - obj(lo)) / (2.0 * hs);
            }
            const double score_rel = (score - fd_score).lpNorm<Eigen::Infinity>() /
                                     score.lpNorm<Eigen::Infinity>();

            const Eigen::MatrixXd hess = dropout_hessian(fam, data, beta, spec);
            const double hh = 1e-5;
            Eigen::MatrixXd fd_hess(d, d);
            for (Eigen::Index j = 0; j < d; ++j) {
                Eigen::VectorXd hi = beta, lo = beta;
                hi[j] += hh;
                lo[j] -= hh;
                fd_hess.col(j) = (dropout_score(fam, data, hi, spec) -
                                  dropout_score(fam, data, lo, spec)) /
                                 (2.0 * hh);
            }
            const double hess_rel = (hess - fd_hess).cwiseAbs().maxCoeff() /
                                    hess.cwiseAbs().maxCoeff();
            return {score_rel, hess_rel};
        };

        SimSpec sim;
        sim.n = 30;
        sim.d = 5;
        sim.beta0 = Eigen::VectorXd::Ones(5);
        sim.noise_sd = 1.0;
        sim.seed = 66;
        const auto [lin_score, lin_hess] =
            check_family(make_family(FamilyKind::Linear), gen_linear_data(sim), 6);
        const auto [log_score, log_hess] =
            check_family(make_family(FamilyKind::Logistic), logistic_data(30, 5, 67), 7);
        const bool ok =
            lin_score <= 1e-6 && log_score <= 1e-6 && lin_hess <= 1e-5 && log_hess <= 1e-5;
        return {ok, "score rel err lin=" + fmt(lin_score) + " logit=" + fmt(log_score) +
                        " <= 1e-6; hessian rel err lin=" + fmt(lin_hess) + " logit=" +
                        fmt(log_hess) + " <= 1e-5"};
    });

    // 7 — the dropout estimator converges to its population limit
    check(7, "consistency of the dropout estimator", [&]() -> std::pair<bool, std::string> {
        SimSpec sim;
        sim.n = 100000;
        sim.d = 4;
        sim.beta0.resize(4);
        sim.beta0 << 1.0, -0.5, 0.25, 0.75;
        sim.noise_sd = 1.0;
        sim.seed = 77;
        const Dataset data = gen_linear_data(sim);
        const double delta = 0.26;
        const Eigen::VectorXd beta_hat = dropout_ridge(data, delta).beta;
        // identity second moments: beta*(delta) = (1-delta) beta0
        const Eigen::VectorXd limit =
            population_limit_lr(Eigen::MatrixXd::Identity(4, 4), sim.beta0, delta);
        const double err = (beta_hat - limit).lpNorm<Eigen::Infinity>();
        return {err <= 0.02, "inf-norm gap to (1-delta) beta0 = " + fmt(err) + " <= 0.02"};
    });

    // 8 — first-order bias of the sqrt(n)-rescaled estimator
    check(8, "first-order asymptotic bias", [&]() -> std::pair<bool, std::string> {
        const long n = 400, d = 3, sims = 500;
        const double c = 1.0;
        Eigen::VectorXd beta0(d);
        beta0 << 1.0, -0.5, 0.25;
        const double delta = c / std::sqrt(static_cast<double>(n));
        const auto fam = make_family(FamilyKind::Linear);

        SimSpec ref;
        ref.n = 200000;
        ref.d = d;
        ref.beta0 = beta0;
        ref.noise_sd = 1.0;
        ref.seed = 2ULL ^ 0xabcdULL;
        const Dataset refdata = gen_linear_data(ref);
        const Eigen::MatrixXd sigma = sigma_matrix(fam, refdata.x, beta0);
        const Eigen::VectorXd mu = asymptotic_bias_mu(fam, refdata, beta0);
        const Eigen::VectorXd target = -sigma.ldlt().solve(c * mu);

        Eigen::MatrixXd zs(sims, d);
        for (long s = 0; s < sims; ++s) {
            SimSpec sim;
            sim.n = n;
            sim.d = d;
            sim.beta0 = beta0;
            sim.noise_sd = 1.0;
            sim.seed = RngStream(2, 800, static_cast<std::uint64_t>(s)).next_u64();
            const Dataset data = gen_linear_data(sim);
            zs.row(s) = (std::sqrt(static_cast<double>(n)) *
                         (dropout_ridge(data, delta).beta - beta0))
                            .transpose();
        }
        double worst = 0.0;
        for (long j = 0; j < d; ++j) {
            const double mean = zs.col(j).mean();
            const double sd =
                std::sqrt((zs.col(j).array() - mean).square().sum() / static_cast<double>(sims - 1));
            worst = std::max(worst,
                             std::abs(mean - target[j]) / (3.0 * sd / std::sqrt((double)sims)));
        }
        return {worst <= 1.0, "max |mean sqrt(n)(beta_hat-beta0) - (-Sigma^{-1} c mu)| / (3 se) = " +
                                  fmt(worst) + " <= 1 over 500 runs at n=400"};
    });

    // 9 — multilevel beats plain SGD at matched draw budgets
    check(9, "mlmc vs sgd accuracy at matched budgets", [&]() -> std::pair<bool, std::string> {
        DivergenceConfig cfg;
        cfg.l_grid = {1600};
        cfg.reps = 20;
        cfg.seed = 0;
        const ExperimentResult res = run_divergence(cfg);
        const double frac = result_lookup(res, "L=1600", "mlmc_beats_sgd_linf_frac").value;
        const double mlmc = result_lookup(res, "L=1600", "mlmc_linf").value;
        const double sgd = result_lookup(res, "L=1600", "paired_sgd_linf").value;
        return {frac >= 0.80, "mlmc wins " + fmt(100.0 * frac) + "% of 20 reps (>= 80%), mean linf " +
                                  fmt(mlmc) + " vs sgd " + fmt(sgd)};
    });

    // 10 — every CLI command is byte-deterministic under fixed seed and flags
    check(10, "cli byte-determinism on rerun", [&]() -> std::pair<bool, std::string> {
        const std::string data_csv = "acc10_data.csv";
        struct Cmd {
            std::string args;
            std::string out;
        };
        const std::vector<Cmd> cmds = {
            {"gen-data --n 50 --d 4 --beta0 1 --noise-sd 1 --seed 3 --out " + data_csv, data_csv},
            {"fit --family linear --method exact --delta 0.3 --data " + data_csv +
                 " --out acc10_fit_exact.csv",
             "acc10_fit_exact.csv"},
            {"fit --family linear --method sgd --delta 0.2 --lr 0.01 --batch 4 --budget 2000 "
             "--seed 5 --data " + data_csv + " --out acc10_fit_sgd.csv",
             "acc10_fit_sgd.csv"},
            {"fit --family linear --method saa --delta 0.2 --masks-per-row 8 --seed 5 --data " +
                 data_csv + " --out acc10_fit_saa.csv",
             "acc10_fit_saa.csv"},
            {"fit --family linear --method mlmc --delta 0.2 --replicas 50 --m0 1 --seed 5 "
             "--data " + data_csv + " --out acc10_fit_mlmc.csv",
             "acc10_fit_mlmc.csv"},
            {"tune-delta --alpha 0.1 --mode oracle --n 50 --d 100 --beta0 1 --noise-sd 10 "
             "--out acc10_tune_oracle.csv",
             "acc10_tune_oracle.csv"},
            {"tune-delta --alpha 0.1 --mode plugin --family linear --data " + data_csv +
                 " --out acc10_tune_plugin.csv",
             "acc10_tune_plugin.csv"},
            {"oracle-check --family logistic --n 20 --d 4 --delta 0.3 --trials 50 "
             "--convex-fns 20 --seed 9 --out acc10_oracle.csv",
             "acc10_oracle.csv"},
            {"experiment coverage --n 60 --d 3 --alpha 0.2 --reps 100 --noise-sd 2 "
             "--cv-folds 5 --seed 1 --out acc10_cov.csv",
             "acc10_cov.csv"},
            {"experiment divergence --L 2 --budget 400 --reps 2 --m0 1 --seed 3 "
             "--out acc10_div.csv",
             "acc10_div.csv"},
        };
        long identical = 0;
        std::string first_diff;
        for (const auto& cmd : cmds) {
            const int rc1 = run_cmd(cli, cmd.args);
            const std::string csv1 = slurp(cmd.out);
            const std::string man1 = slurp(cmd.out + ".manifest.json");
            const int rc2 = run_cmd(cli, cmd.args);
            const std::string csv2 = slurp(cmd.out);
            const std::string man2 = slurp(cmd.out + ".manifest.json");
            if (rc1 == 0 && rc2 == 0 && csv1 == csv2 && man1 == man2) {
                ++identical;
            } else if (first_diff.empty()) {
                first_diff = cmd.out;
            }
        }
        for (const auto& cmd : cmds) {
            std::remove(cmd.out.c_str());
            std::remove((cmd.out + ".manifest.json").c_str());
        }
        const bool ok = identical == static_cast<long>(cmds.size());
        return {ok, std::to_string(identical) + "/" + std::to_string(cmds.size()) +
                        " commands byte-identical on rerun" +
                        (ok ? "" : " (first mismatch: " + first_diff + ")")};
    });

    std::printf("%d of 10 checks failed\n", failures);
    return failures;
}
