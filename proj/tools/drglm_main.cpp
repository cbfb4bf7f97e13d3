#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drglm/delta_tuner.hpp"
#include "drglm/dropout.hpp"
#include "drglm/glm.hpp"
#include "drglm/harness.hpp"
#include "drglm/linreg.hpp"
#include "drglm/rng.hpp"
#include "drglm/solvers.hpp"
#include "drglm/util.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string eigen_version_string() {
    return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
           std::to_string(EIGEN_MINOR_VERSION);
}

// Every artifact gets a <out>.manifest.json with the resolved flags, seed,
// and library versions.  No timestamps: a rerun must be byte-identical.
void write_manifest(const std::string& out_path, const std::string& command,
                    const nlohmann::ordered_json& flags) {
    nlohmann::ordered_json doc;
    doc["tool"] = "drglm";
    doc["tool_version"] = kToolVersion;
    doc["eigen_version"] = eigen_version_string();
    doc["cli11_version"] = CLI11_VERSION;
    doc["command"] = command;
    doc["flags"] = flags;
    const std::string path = out_path + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw drglm::Error("cannot write manifest '" + path + "'");
    out << doc.dump(2) << "\n";
}

void write_name_value_csv(const std::string& path,
                          const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw drglm::Error("cannot write '" + path + "'");
    out << "name,value\n";
    for (const auto& [name, value] : rows) out << name << "," << drglm::format_double(value) << "\n";
    if (!out) throw drglm::Error("write to '" + path + "' failed");
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Small synthetic instance for the certification command.  X rows are
// standard normal, beta ~ N(0, I/d), and y follows the requested family.
drglm::Dataset gen_family_data(const drglm::GlmFamily& family, long n, long d,
                               const Eigen::VectorXd& beta, std::uint64_t seed) {
    drglm::Dataset data;
    data.x.resize(n, d);
    data.y.resize(n);
    for (long i = 0; i < n; ++i) {
        drglm::RngStream rng(seed, static_cast<std::uint64_t>(i), 0x79ULL);
        for (long j = 0; j < d; ++j) data.x(i, j) = rng.normal();
        const double eta = data.x.row(i).dot(beta);
        switch (family.kind) {
            case drglm::FamilyKind::Linear:
                data.y[i] = eta + rng.normal();
                break;
            case drglm::FamilyKind::Logistic:
                data.y[i] = rng.uniform() < sigmoid(eta) ? 1.0 : 0.0;
                break;
            case drglm::FamilyKind::Poisson: {
                const double lambda = std::exp(eta);
                const double u = rng.uniform();
                double p = std::exp(-lambda), cum = p;
                long k = 0;
                while (u > cum && k < 1000000) {
                    ++k;
                    p *= lambda / static_cast<double>(k);
                    cum += p;
                }
                data.y[i] = static_cast<double>(k);
                break;
            }
        }
    }
    return data;
}

void print_result_rows(const drglm::ExperimentResult& result) {
    for (const drglm::ResultRow& row : result.rows) {
        std::cout << row.config_id << "  " << row.metric << " = "
                  << drglm::format_double(row.value) << "  (se " << drglm::format_double(row.std_err)
                  << ", reps " << row.reps << ")\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributionally robust dropout training for GLMs"};
    app.set_version_flag("--version", kToolVersion);
    app.set_config("--config", "", "read flags from an INI/TOML file (command-line flags override)");
    app.require_subcommand(1);
    int exit_code = 0;

    // ---- gen-data ----------------------------------------------------------
    struct {
        long n = 100, d = 10;
        double beta0 = 1.0, noise_sd = 1.0;
        std::uint64_t seed = 0;
        std::string out;
    } gd;
    CLI::App* gen = app.add_subcommand("gen-data", "simulate a linear-model dataset");
    gen->add_option("--n", gd.n, "number of observations");
    gen->add_option("--d", gd.d, "number of covariates");
    gen->add_option("--beta0", gd.beta0, "value of every coordinate of the true coefficient vector");
    gen->add_option("--noise-sd", gd.noise_sd, "residual standard deviation");
    gen->add_option("--seed", gd.seed, "RNG seed");
    gen->add_option("--out", gd.out, "output CSV path")->required();
    gen->callback([&] {
        drglm::SimSpec spec{gd.n, gd.d, Eigen::VectorXd::Constant(gd.d, gd.beta0), gd.noise_sd,
                            gd.seed};
        const drglm::Dataset data = drglm::gen_linear_data(spec);
        drglm::write_dataset_csv(gd.out, data);
        write_manifest(gd.out, "gen-data",
                       {{"n", gd.n},
                        {"d", gd.d},
                        {"beta0", gd.beta0},
                        {"noise_sd", gd.noise_sd},
                        {"seed", gd.seed},
                        {"out", gd.out}});
        std::cout << "wrote " << data.n() << "x" << data.d() << " dataset to " << gd.out << "\n";
    });

    // ---- fit ---------------------------------------------------------------
    struct {
        std::string family = "linear", method = "exact", data, out;
        double delta = 0.0;
        std::uint64_t seed = 0;
        double lr = 1e-4;
        long batch = 1;
        long budget = 100000;
        long masks_per_row = 16;
        double r = 0.6464466094067263;
        int m0 = 3;
        long replicas = 100;
        int threads = 1;
    } ft;
    CLI::App* fit = app.add_subcommand("fit", "fit a GLM with dropout training");
    fit->add_option("--family", ft.family, "model family")
        ->check(CLI::IsMember({"linear", "logistic", "poisson"}));
    fit->add_option("--delta", ft.delta, "dropout probability");
    fit->add_option("--method", ft.method, "training method")
        ->check(CLI::IsMember({"exact", "sgd", "saa", "mlmc"}));
    fit->add_option("--data", ft.data, "input dataset CSV")->required();
    fit->add_option("--seed", ft.seed, "RNG seed (sgd/saa/mlmc)");
    fit->add_option("--out", ft.out, "output CSV path (name,value rows)");
    fit->add_option("--lr", ft.lr, "sgd: step size");
    fit->add_option("--batch", ft.batch, "sgd: draws per update");
    fit->add_option("--budget", ft.budget, "sgd: total draw budget");
    fit->add_option("--masks-per-row", ft.masks_per_row, "saa: frozen masks per observation");
    fit->add_option("--mlmc-r", ft.r, "mlmc: geometric level parameter");
    fit->add_option("--m0", ft.m0, "mlmc: burn-in level");
    fit->add_option("--replicas", ft.replicas, "mlmc: number of independent replicas (L)");
    fit->add_option("--threads", ft.threads, "mlmc: worker threads (never changes the result)");
    fit->callback([&] {
        const drglm::GlmFamily family = drglm::family_from_name(ft.family);
        const drglm::Dataset data = drglm::read_dataset_csv(ft.data);
        drglm::check_response(family, data);
        const drglm::DropoutSpec spec = drglm::make_dropout_spec(data.d(), ft.delta);

        drglm::ModelParams params;
        std::vector<std::pair<std::string, double>> rows;
        if (ft.method == "exact") {
            params = drglm::solve_exact_gd(family, data, spec);
        } else if (ft.method == "sgd") {
            drglm::SgdConfig cfg;
            cfg.lr = ft.lr;
            cfg.batch = ft.batch;
            cfg.budget = ft.budget;
            cfg.seed = ft.seed;
            params = drglm::solve_sgd(family, data, spec, cfg);
        } else if (ft.method == "saa") {
            params = drglm::solve_saa(family, data, spec, ft.masks_per_row, {}, ft.seed);
        } else {
            drglm::MlmcConfig cfg;
            cfg.r = ft.r;
            cfg.m0 = ft.m0;
            cfg.replicas = ft.replicas;
            cfg.master_seed = ft.seed;
            cfg.threads = ft.threads;
            const drglm::MlmcReport report = drglm::mlmc_solve(family, data, spec, cfg);
            params.beta = report.estimate;
            params.phi = report.phi_delta0.value_or(1.0);
            rows.emplace_back("mlmc_total_draws", static_cast<double>(report.total_draws));
            rows.emplace_back("mlmc_empirical_variance", report.empirical_variance);
        }

        std::vector<std::pair<std::string, double>> out_rows;
        for (long j = 0; j < params.beta.size(); ++j)
            out_rows.emplace_back("beta_" + std::to_string(j + 1), params.beta[j]);
        out_rows.emplace_back("phi", params.phi);
        out_rows.insert(out_rows.end(), rows.begin(), rows.end());

        if (!ft.out.empty()) {
            write_name_value_csv(ft.out, out_rows);
            write_manifest(ft.out, "fit",
                           {{"family", ft.family},
                            {"delta", ft.delta},
                            {"method", ft.method},
                            {"data", ft.data},
                            {"seed", ft.seed},
                            {"lr", ft.lr},
                            {"batch", ft.batch},
                            {"budget", ft.budget},
                            {"masks_per_row", ft.masks_per_row},
                            {"mlmc_r", ft.r},
                            {"m0", ft.m0},
                            {"replicas", ft.replicas},
                            {"threads", ft.threads},
                            {"out", ft.out}});
            std::cout << "wrote fit to " << ft.out << "\n";
        } else {
            for (const auto& [name, value] : out_rows)
                std::cout << name << " = " << drglm::format_double(value) << "\n";
        }
    });

    // ---- tune-delta --------------------------------------------------------
    struct {
        double alpha = 0.1;
        std::string mode = "oracle", data, family = "linear", out;
        long n = 0, d = 0;
        double beta0 = 1.0, noise_sd = 1.0;
    } td;
    CLI::App* tune = app.add_subcommand("tune-delta", "pick delta = c/sqrt(n) for a coverage target");
    tune->add_option("--alpha", td.alpha, "miscoverage level in (0,1)")->required();
    tune->add_option("--mode", td.mode, "oracle: analytic mu/sigma from (d, beta0, noise-sd); "
                                        "plugin: estimate them from --data")
        ->check(CLI::IsMember({"oracle", "plugin"}))
        ->required();
    tune->add_option("--n", td.n, "oracle: sample size the delta is tuned for");
    tune->add_option("--d", td.d, "oracle: number of covariates");
    tune->add_option("--beta0", td.beta0, "oracle: value of every true coefficient");
    tune->add_option("--noise-sd", td.noise_sd, "oracle: residual standard deviation");
    tune->add_option("--data", td.data, "plugin: dataset CSV to estimate mu and sigma from");
    tune->add_option("--family", td.family, "plugin: model family")
        ->check(CLI::IsMember({"linear", "logistic", "poisson"}));
    tune->add_option("--out", td.out, "output CSV path (name,value rows)");
    tune->callback([&] {
        drglm::DeltaChoice choice;
        if (td.mode == "oracle") {
            drglm::require(td.n >= 1, "tune-delta oracle mode needs --n >= 1");
            drglm::require(td.d >= 1, "tune-delta oracle mode needs --d >= 1");
            drglm::require(td.noise_sd > 0.0, "tune-delta oracle mode needs --noise-sd > 0");
            const double phi_star = td.noise_sd * td.noise_sd;
            const double mu =
                drglm::mu_linear(Eigen::VectorXd::Ones(td.d),
                                 Eigen::VectorXd::Constant(td.d, td.beta0), phi_star);
            choice = drglm::choose_delta(td.alpha, td.n, mu, std::sqrt(0.5));
        } else {
            drglm::require(!td.data.empty(), "tune-delta plugin mode needs --data");
            const drglm::GlmFamily family = drglm::family_from_name(td.family);
            const drglm::Dataset data = drglm::read_dataset_csv(td.data);
            drglm::check_response(family, data);
            const drglm::ModelParams fit0 = drglm::fit_mle(family, data);
            double mu, sigma;
            if (family.kind == drglm::FamilyKind::Linear) {
                const Eigen::VectorXd second_moments =
                    data.x.colwise().squaredNorm().transpose() / static_cast<double>(data.n());
                mu = drglm::mu_linear(second_moments, fit0.beta, fit0.phi);
                sigma = drglm::sigma_linear(fit0.phi, data.y - data.x * fit0.beta);
            } else {
                mu = drglm::mu_general(family, data, fit0.beta, fit0.phi);
                // sample sd of the per-observation losses at the delta=0 fit
                Eigen::VectorXd losses(data.n());
                for (long i = 0; i < data.n(); ++i)
                    losses[i] = drglm::loss(family, data.x.row(i).transpose(), data.y[i], fit0);
                const double mean = losses.mean();
                sigma = std::sqrt((losses.array() - mean).square().sum() /
                                  static_cast<double>(data.n() - 1));
            }
            choice = drglm::choose_delta(td.alpha, data.n(), mu, sigma);
        }

        std::cout << "alpha = " << drglm::format_double(choice.alpha) << "\n"
                  << "n = " << choice.n << "\n"
                  << "mu = " << drglm::format_double(choice.mu_hat) << "\n"
                  << "sigma = " << drglm::format_double(choice.sigma_hat) << "\n"
                  << "z = " << drglm::format_double(choice.z_quantile) << "\n"
                  << "c = " << drglm::format_double(choice.c) << "\n"
                  << "delta = " << drglm::format_double(choice.delta) << "\n";
        if (!td.out.empty()) {
            write_name_value_csv(td.out, {{"alpha", choice.alpha},
                                          {"n", static_cast<double>(choice.n)},
                                          {"mu", choice.mu_hat},
                                          {"sigma", choice.sigma_hat},
                                          {"z", choice.z_quantile},
                                          {"c", choice.c},
                                          {"delta", choice.delta}});
            write_manifest(td.out, "tune-delta",
                           {{"alpha", td.alpha},
                            {"mode", td.mode},
                            {"n", td.n},
                            {"d", td.d},
                            {"beta0", td.beta0},
                            {"noise_sd", td.noise_sd},
                            {"data", td.data},
                            {"family", td.family},
                            {"out", td.out}});
        }
    });

    // ---- oracle-check ------------------------------------------------------
    struct {
        std::string family = "linear", out;
        long n = 20, d = 4, trials = 200, convex_fns = 50;
        double delta = 0.3, tol = 1e-9;
        int grid_size = 1001;
        std::uint64_t seed = 0;
    } oc;
    CLI::App* oracle = app.add_subcommand(
        "oracle-check", "certify that scaled-Bernoulli dropout attains the worst-case expectation");
    oracle->add_option("--family", oc.family, "model family")
        ->check(CLI::IsMember({"linear", "logistic", "poisson"}));
    oracle->add_option("--n", oc.n, "observations in the synthetic instance");
    oracle->add_option("--d", oc.d, "covariates (enumeration-bound, at most 8)");
    oracle->add_option("--delta", oc.delta, "dropout probability");
    oracle->add_option("--trials", oc.trials, "random feasible product distributions to test");
    oracle->add_option("--convex-fns", oc.convex_fns,
                       "random convex functions for the one-dimensional adversary check");
    oracle->add_option("--grid-size", oc.grid_size, "adversary two-point search grid");
    oracle->add_option("--tol", oc.tol, "violation tolerance");
    oracle->add_option("--seed", oc.seed, "RNG seed");
    oracle->add_option("--out", oc.out, "output CSV path (name,value rows)");
    oracle->callback([&] {
        const drglm::GlmFamily family = drglm::family_from_name(oc.family);
        drglm::RngStream bstream(oc.seed, 0xb3a0ULL, 0);
        Eigen::VectorXd beta(oc.d);
        for (long j = 0; j < oc.d; ++j)
            beta[j] = bstream.normal() / std::sqrt(static_cast<double>(oc.d));
        const drglm::Dataset data = gen_family_data(family, oc.n, oc.d, beta, oc.seed);
        const drglm::DropoutSpec spec = drglm::make_dropout_spec(oc.d, oc.delta);
        const drglm::ModelParams params{beta, 1.0};

        drglm::RngStream cert_rng(oc.seed, 0xce47ULL, 0);
        const drglm::CertifyReport report =
            drglm::certify_least_favorable(family, data, spec, params, oc.trials, cert_rng);

        // one-dimensional cross-check: on convex f the two-point grid search
        // must land on the endpoint Bernoulli value
        drglm::RngStream fn_rng(oc.seed, 0xadf7ULL, 0);
        const double upper = 1.0 / (1.0 - oc.delta);
        double max_adversary_dev = 0.0;
        for (long k = 0; k < oc.convex_fns; ++k) {
            const double a = 0.1 + 4.0 * fn_rng.uniform();
            const double b = 2.0 * upper * fn_rng.uniform() - 0.5;
            const double c0 = 2.0 * fn_rng.uniform() - 1.0;
            const auto f = [&](double t) { return a * (t - b) * (t - b) + c0; };
            const double grid_best = drglm::adversary_value(f, oc.delta, oc.grid_size).first;
            const double bernoulli = oc.delta * f(0.0) + (1.0 - oc.delta) * f(upper);
            max_adversary_dev = std::max(max_adversary_dev, std::abs(grid_best - bernoulli));
        }

        const bool ok = report.max_violation <= oc.tol && max_adversary_dev <= oc.tol;
        std::cout << "dropout objective value = " << drglm::format_double(report.dropout_value)
                  << "\n"
                  << "max competing value     = " << drglm::format_double(report.max_other_value)
                  << "\n"
                  << "max violation           = " << drglm::format_double(report.max_violation)
                  << " over " << report.trials << " trials\n"
                  << "adversary grid max dev  = " << drglm::format_double(max_adversary_dev)
                  << " over " << oc.convex_fns << " convex functions\n"
                  << (ok ? "CERTIFIED" : "VIOLATION") << " (tol " << drglm::format_double(oc.tol)
                  << ")\n";
        if (!oc.out.empty()) {
            write_name_value_csv(oc.out,
                                 {{"dropout_value", report.dropout_value},
                                  {"max_other_value", report.max_other_value},
                                  {"max_violation", report.max_violation},
                                  {"trials", static_cast<double>(report.trials)},
                                  {"adversary_max_dev", max_adversary_dev},
                                  {"convex_fns", static_cast<double>(oc.convex_fns)},
                                  {"certified", ok ? 1.0 : 0.0}});
            write_manifest(oc.out, "oracle-check",
                           {{"family", oc.family},
                            {"n", oc.n},
                            {"d", oc.d},
                            {"delta", oc.delta},
                            {"trials", oc.trials},
                            {"convex_fns", oc.convex_fns},
                            {"grid_size", oc.grid_size},
                            {"tol", oc.tol},
                            {"seed", oc.seed},
                            {"out", oc.out}});
        }
        if (!ok) exit_code = 1;
    });

    // ---- experiment --------------------------------------------------------
    CLI::App* experiment = app.add_subcommand("experiment", "run a simulation study");
    experiment->require_subcommand(1);

    struct {
        std::vector<long> n_list{1000};
        long d = 10, reps = 500, cv_folds = 10;
        std::vector<double> alpha_list{0.2, 0.1, 0.05};
        double beta0 = 1.0, noise_sd = 10.0;
        std::vector<double> cv_grid;
        std::uint64_t seed = 0;
        int threads = 1;
        std::string out;
    } cv;
    CLI::App* coverage = experiment->add_subcommand(
        "coverage", "in-sample loss coverage of the true population loss across replications");
    coverage->add_option("--n", cv.n_list, "sample sizes (repeatable)");
    coverage->add_option("--d", cv.d, "number of covariates");
    coverage->add_option("--alpha", cv.alpha_list, "miscoverage levels (repeatable)");
    coverage->add_option("--reps", cv.reps, "replications per configuration");
    coverage->add_option("--beta0", cv.beta0, "value of every true coefficient");
    coverage->add_option("--noise-sd", cv.noise_sd, "residual standard deviation");
    coverage->add_option("--cv-folds", cv.cv_folds, "folds for the cross-validated baseline");
    coverage->add_option("--cv-grid", cv.cv_grid, "delta grid for the cross-validated baseline");
    coverage->add_option("--seed", cv.seed, "RNG seed");
    coverage->add_option("--threads", cv.threads, "worker threads (never changes the result)");
    coverage->add_option("--out", cv.out, "output CSV path")->required();
    coverage->callback([&] {
        drglm::CoverageConfig cfg;
        cfg.n_list = cv.n_list;
        cfg.d = cv.d;
        cfg.alpha_list = cv.alpha_list;
        cfg.reps = cv.reps;
        cfg.beta0 = Eigen::VectorXd::Constant(cv.d, cv.beta0);
        cfg.noise_sd = cv.noise_sd;
        cfg.cv_folds = cv.cv_folds;
        if (!cv.cv_grid.empty()) cfg.cv_grid = cv.cv_grid;
        cfg.seed = cv.seed;
        cfg.threads = cv.threads;
        const drglm::ExperimentResult result = drglm::run_coverage(cfg);
        drglm::write_result_csv(cv.out, result);
        write_manifest(cv.out, "experiment coverage",
                       {{"n", cv.n_list},
                        {"d", cv.d},
                        {"alpha", cv.alpha_list},
                        {"reps", cv.reps},
                        {"beta0", cv.beta0},
                        {"noise_sd", cv.noise_sd},
                        {"cv_folds", cv.cv_folds},
                        {"cv_grid", cfg.cv_grid},
                        {"seed", cv.seed},
                        {"threads", cv.threads},
                        {"out", cv.out}});
        print_result_rows(result);
        std::cout << "wrote " << result.rows.size() << " rows to " << cv.out << "\n";
    });

    struct {
        std::vector<long> l_grid{400, 1600};
        std::vector<long> budget_grid;
        long reps = 20;
        double alpha = 0.1, r = 0.6464466094067263, sgd_lr = 1e-4;
        int m0 = 3, threads = 1;
        std::uint64_t seed = 0;
        std::string out;
    } dv;
    CLI::App* divergence = experiment->add_subcommand(
        "divergence", "MLMC-vs-SGD distance to the exact dropout solution at matched draw budgets");
    divergence->add_option("--L", dv.l_grid, "MLMC replica counts (repeatable)");
    divergence->add_option("--budget", dv.budget_grid,
                           "standalone SGD draw budgets (default: matched to each L)");
    divergence->add_option("--reps", dv.reps, "outer repetitions");
    divergence->add_option("--alpha", dv.alpha, "miscoverage level fed to the delta tuner");
    divergence->add_option("--mlmc-r", dv.r, "geometric level parameter");
    divergence->add_option("--m0", dv.m0, "burn-in level");
    divergence->add_option("--sgd-lr", dv.sgd_lr, "SGD step size");
    divergence->add_option("--seed", dv.seed, "RNG seed");
    divergence->add_option("--threads", dv.threads, "worker threads (never changes the result)");
    divergence->add_option("--out", dv.out, "output CSV path")->required();
    divergence->callback([&] {
        drglm::DivergenceConfig cfg;
        cfg.l_grid = dv.l_grid;
        cfg.budget_grid = dv.budget_grid;
        cfg.reps = dv.reps;
        cfg.alpha = dv.alpha;
        cfg.r = dv.r;
        cfg.m0 = dv.m0;
        cfg.sgd_lr = dv.sgd_lr;
        cfg.seed = dv.seed;
        cfg.threads = dv.threads;
        const drglm::ExperimentResult result = drglm::run_divergence(cfg);
        drglm::write_result_csv(dv.out, result);
        write_manifest(dv.out, "experiment divergence",
                       {{"L", dv.l_grid},
                        {"budget", dv.budget_grid},
                        {"reps", dv.reps},
                        {"alpha", dv.alpha},
                        {"mlmc_r", dv.r},
                        {"m0", dv.m0},
                        {"sgd_lr", dv.sgd_lr},
                        {"seed", dv.seed},
                        {"threads", dv.threads},
                        {"out", dv.out}});
        print_result_rows(result);
        std::cout << "wrote " << result.rows.size() << " rows to " << dv.out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
