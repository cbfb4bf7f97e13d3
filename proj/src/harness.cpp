#include "drglm/harness.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "drglm/delta_tuner.hpp"
#include "drglm/dropout.hpp"
#include "drglm/linreg.hpp"
#include "drglm/rng.hpp"
#include "drglm/solvers.hpp"
#include "drglm/util.hpp"

namespace drglm {

namespace {

constexpr std::uint64_t kCvTag = 0x6376666f6cd5ULL;      // cv fold shuffle stream
constexpr std::uint64_t kDivDataTag = 0x646976646174ULL; // divergence dataset seed
constexpr double kTwoPi = 6.283185307179586476925286766559;

double binom_se(double p, long reps) {
    return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(reps));
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a;
    return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double a : v) ss += (a - m) * (a - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

Dataset gen_linear_data(const SimSpec& spec) {
    require(spec.n >= 1 && spec.d >= 1, "gen_linear_data: n and d must be at least 1");
    require(spec.noise_sd >= 0.0, "gen_linear_data: noise_sd must be nonnegative");
    require(spec.beta0.size() == spec.d, "gen_linear_data: beta0 must have length d");

    Dataset data;
    data.x.resize(spec.n, spec.d);
    data.y.resize(spec.n);
    for (long i = 0; i < spec.n; ++i) {
        RngStream rng(spec.seed, static_cast<std::uint64_t>(i), 0);
        for (long j = 0; j < spec.d; ++j) data.x(i, j) = rng.normal();
        data.y[i] = data.x.row(i).dot(spec.beta0) + spec.noise_sd * rng.normal();
    }
    return data;
}

void write_result_csv(const std::string& path, const ExperimentResult& result) {
    std::ofstream out(path);
    if (!out) throw Error("results: cannot write '" + path + "'");
    out << "config,metric,value,std_err,reps\n";
    for (const ResultRow& row : result.rows) {
        require(row.config_id.find(',') == std::string::npos &&
                    row.metric.find(',') == std::string::npos,
                "results: config/metric ids must not contain commas");
        out << row.config_id << "," << row.metric << "," << format_double(row.value) << ","
            << format_double(row.std_err) << "," << row.reps << "\n";
    }
    if (!out) throw Error("results: write to '" + path + "' failed");
}

ExperimentResult read_result_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("results: cannot open '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "results: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "config,metric,value,std_err,reps", "results: unexpected header");

    const auto parse_num = [](const std::string& s, const char* what) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size())
            throw Error(std::string("results: bad ") + what + " field '" + s + "'");
        return v;
    };

    ExperimentResult result;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string cur;
        while (std::getline(ss, cur, ',')) fields.push_back(cur);
        require(fields.size() == 5, "results: row must have 5 fields");
        ResultRow row;
        row.config_id = fields[0];
        row.metric = fields[1];
        row.value = parse_num(fields[2], "value");
        row.std_err = parse_num(fields[3], "std_err");
        row.reps = static_cast<long>(parse_num(fields[4], "reps"));
        result.rows.push_back(std::move(row));
    }
    return result;
}

double run_cv_delta(const GlmFamily& family, const Dataset& data, long folds,
                    const std::vector<double>& delta_grid, std::uint64_t seed) {
    require(!delta_grid.empty(), "run_cv_delta: delta grid is empty");
    for (double dlt : delta_grid)
        require(dlt >= 0.0 && dlt <= 0.95, "run_cv_delta: grid values must lie in [0, 0.95]");
    const long n = data.n();
    const long d = data.d();
    require(folds >= 2 && folds <= n, "run_cv_delta: folds must lie in [2, n]");

    // one shuffle shared by every candidate delta
    std::vector<long> idx(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    RngStream rng(seed, 0, kCvTag);
    for (long i = n - 1; i > 0; --i) {
        long j = static_cast<long>(rng.uniform() * static_cast<double>(i + 1));
        if (j > i) j = i;
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }

    double best_delta = delta_grid.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (double dlt : delta_grid) {
        const DropoutSpec spec = make_dropout_spec(d, dlt);
        double score = 0.0;
        for (long f = 0; f < folds; ++f) {
            const long lo = f * n / folds;
            const long hi = (f + 1) * n / folds;
            Dataset train;
            train.x.resize(n - (hi - lo), d);
            train.y.resize(n - (hi - lo));
            long r = 0;
            for (long i = 0; i < n; ++i) {
                if (i >= lo && i < hi) continue;
                train.x.row(r) = data.x.row(idx[static_cast<size_t>(i)]);
                train.y[r] = data.y[idx[static_cast<size_t>(i)]];
                ++r;
            }
            Eigen::VectorXd beta;
            if (family.kind == FamilyKind::Linear) {
                beta = dropout_ridge(train, dlt).beta;
            } else {
                beta = solve_exact_gd(family, train, spec).beta;
            }
            // held-out delta=0 loss at unit dispersion; the dropped additive
            // -ln h and 1/a(phi) factors do not affect the ranking
            for (long i = lo; i < hi; ++i) {
                const long row = idx[static_cast<size_t>(i)];
                const double eta = data.x.row(row).dot(beta);
                score += family.psi(eta) - data.y[row] * eta;
            }
        }
        if (score < best_score) {
            best_score = score;
            best_delta = dlt;
        }
    }
    return best_delta;
}

ExperimentResult run_coverage(const CoverageConfig& cfg) {
    require(!cfg.n_list.empty() && !cfg.alpha_list.empty(),
            "run_coverage: n_list and alpha_list must be nonempty");
    require(cfg.reps >= 100, "run_coverage: need at least 100 replications");
    require(cfg.noise_sd > 0.0, "run_coverage: noise_sd must be positive");
    require(cfg.d >= 1, "run_coverage: d must be at least 1");

    const GlmFamily family = make_family(FamilyKind::Linear);
    const Eigen::VectorXd beta0 =
        cfg.beta0.size() == 0 ? Eigen::VectorXd::Ones(cfg.d) : cfg.beta0;
    require(beta0.size() == cfg.d, "run_coverage: beta0 must have length d");

    const double phi_star = cfg.noise_sd * cfg.noise_sd;
    const double true_loss = 0.5 * std::log(kTwoPi * phi_star) + 0.5;
    // oracle-mode tuning inputs: E[X_j^2] = 1 and sigma = sqrt(1/2) for the
    // Gaussian design
    const double mu = mu_linear(Eigen::VectorXd::Ones(cfg.d), beta0, phi_star);
    const double sigma = std::sqrt(0.5);

    ExperimentResult result;
    const size_t n_alpha = cfg.alpha_list.size();
    for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const long n = cfg.n_list[ni];
        std::vector<double> deltas(n_alpha);
        for (size_t ai = 0; ai < n_alpha; ++ai)
            deltas[ai] = choose_delta(cfg.alpha_list[ai], n, mu, sigma).delta;

        std::vector<std::vector<char>> covered(n_alpha,
                                               std::vector<char>(static_cast<size_t>(cfg.reps)));
        std::vector<char> covered_ols(static_cast<size_t>(cfg.reps));
        std::vector<char> covered_cv(static_cast<size_t>(cfg.reps));
        std::vector<double> cv_deltas(static_cast<size_t>(cfg.reps));

        parallel_for(cfg.reps, cfg.threads, [&](long rep) {
            RngStream seeder(cfg.seed, static_cast<std::uint64_t>(ni),
                             static_cast<std::uint64_t>(rep));
            SimSpec sim{n, cfg.d, beta0, cfg.noise_sd, seeder.next_u64()};
            const std::uint64_t cv_seed = seeder.next_u64();
            const Dataset data = gen_linear_data(sim);

            const RidgeDropoutSolution ols = dropout_ridge(data, 0.0);
            const double phi_hat = std::max(
                (data.y - data.x * ols.beta).squaredNorm() / static_cast<double>(n), 1e-12);

            const ModelParams ols_params{ols.beta, phi_hat};
            covered_ols[static_cast<size_t>(rep)] =
                avg_neg_loglik(family, data, ols_params) >= true_loss;

            for (size_t ai = 0; ai < n_alpha; ++ai) {
                const DropoutSpec spec = make_dropout_spec(cfg.d, deltas[ai]);
                const ModelParams params{dropout_ridge(data, deltas[ai]).beta, phi_hat};
                covered[ai][static_cast<size_t>(rep)] =
                    in_sample_loss(family, data, params, spec).in_sample >= true_loss;
            }

            const double cv_delta =
                run_cv_delta(family, data, cfg.cv_folds, cfg.cv_grid, cv_seed);
            cv_deltas[static_cast<size_t>(rep)] = cv_delta;
            const DropoutSpec cv_spec = make_dropout_spec(cfg.d, cv_delta);
            const ModelParams cv_params{dropout_ridge(data, cv_delta).beta, phi_hat};
            covered_cv[static_cast<size_t>(rep)] =
                in_sample_loss(family, data, cv_params, cv_spec).in_sample >= true_loss;
        });

        const auto frequency = [&](const std::vector<char>& flags) {
            long hits = 0;
            for (char c : flags) hits += c;
            return static_cast<double>(hits) / static_cast<double>(cfg.reps);
        };

        for (size_t ai = 0; ai < n_alpha; ++ai) {
            const std::string id = "n=" + std::to_string(n) +
                                   ";alpha=" + format_double(cfg.alpha_list[ai]) +
                                   ";method=dropout-oracle";
            const double p = frequency(covered[ai]);
            result.rows.push_back({id, "coverage", p, binom_se(p, cfg.reps), cfg.reps});
            result.rows.push_back({id, "delta", deltas[ai], 0.0, cfg.reps});
        }
        const double p_ols = frequency(covered_ols);
        result.rows.push_back({"n=" + std::to_string(n) + ";method=ols", "coverage", p_ols,
                               binom_se(p_ols, cfg.reps), cfg.reps});
        const double p_cv = frequency(covered_cv);
        const std::string cv_id =
            "n=" + std::to_string(n) + ";method=cv" + std::to_string(cfg.cv_folds);
        result.rows.push_back({cv_id, "coverage", p_cv, binom_se(p_cv, cfg.reps), cfg.reps});
        result.rows.push_back(
            {cv_id, "cv_delta_mean", mean_of(cv_deltas), se_of(cv_deltas), cfg.reps});
    }
    return result;
}

ExperimentResult run_divergence(const DivergenceConfig& cfg) {
    require(!cfg.l_grid.empty(), "run_divergence: l_grid must be nonempty");
    require(cfg.reps >= 2, "run_divergence: need at least 2 repetitions");

    // the fixed instance from the reference experiment
    const long n = 50, d = 100;
    const double noise_sd = 10.0;
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Ones(d);
    const GlmFamily family = make_family(FamilyKind::Linear);

    RngStream seeder(cfg.seed, 0, kDivDataTag);
    const Dataset data = gen_linear_data(SimSpec{n, d, beta0, noise_sd, seeder.next_u64()});

    const double phi_star = noise_sd * noise_sd;
    const DeltaChoice choice =
        choose_delta(cfg.alpha, n, mu_linear(Eigen::VectorXd::Ones(d), beta0, phi_star),
                     std::sqrt(0.5));
    const DropoutSpec spec = make_dropout_spec(d, choice.delta);
    const Eigen::VectorXd target = dropout_ridge(data, choice.delta).beta;

    ExperimentResult result;
    result.rows.push_back({"instance", "delta", choice.delta, 0.0, 1});
    result.rows.push_back({"instance", "c", choice.c, 0.0, 1});
    result.rows.push_back({"instance", "n", static_cast<double>(n), 0.0, 1});
    result.rows.push_back({"instance", "d", static_cast<double>(d), 0.0, 1});

    std::vector<long> budgets = cfg.budget_grid;
    const double per_replica_cost = static_cast<double>(n) * std::pow(2.0, cfg.m0 + 1) * cfg.r /
                                    (2.0 * cfg.r - 1.0);
    if (budgets.empty())
        for (long l : cfg.l_grid)
            budgets.push_back(static_cast<long>(std::llround(per_replica_cost * l)));

    const auto err_norms = [&](const Eigen::VectorXd& est) {
        const Eigen::VectorXd e = est - target;
        return std::array<double, 3>{e.lpNorm<1>(), e.norm(), e.lpNorm<Eigen::Infinity>()};
    };

    for (size_t li = 0; li < cfg.l_grid.size(); ++li) {
        const long big_l = cfg.l_grid[li];
        std::vector<std::array<double, 3>> mlmc_err(static_cast<size_t>(cfg.reps));
        std::vector<std::array<double, 3>> sgd_err(static_cast<size_t>(cfg.reps));
        std::vector<double> draws(static_cast<size_t>(cfg.reps));
        std::vector<char> beats(static_cast<size_t>(cfg.reps));

        parallel_for(cfg.reps, cfg.threads, [&](long rep) {
            RngStream rep_seeder(cfg.seed, 1 + li, static_cast<std::uint64_t>(rep));
            MlmcConfig mc;
            mc.r = cfg.r;
            mc.m0 = cfg.m0;
            mc.replicas = big_l;
            mc.master_seed = rep_seeder.next_u64();
            const std::uint64_t sgd_seed = rep_seeder.next_u64();

            const MlmcReport report = mlmc_solve(family, data, spec, mc);
            mlmc_err[static_cast<size_t>(rep)] = err_norms(report.estimate);
            draws[static_cast<size_t>(rep)] = static_cast<double>(report.total_draws);

            // paired SGD run at this replica set's realized draw budget
            SgdConfig sgd;
            sgd.lr = cfg.sgd_lr;
            sgd.budget = report.total_draws;
            sgd.seed = sgd_seed;
            sgd_err[static_cast<size_t>(rep)] = err_norms(solve_sgd(family, data, spec, sgd).beta);
            beats[static_cast<size_t>(rep)] =
                mlmc_err[static_cast<size_t>(rep)][2] < sgd_err[static_cast<size_t>(rep)][2];
        });

        const std::string id = "L=" + std::to_string(big_l);
        const char* names[3] = {"l1", "l2", "linf"};
        for (int k = 0; k < 3; ++k) {
            std::vector<double> v(static_cast<size_t>(cfg.reps));
            std::vector<double> w(static_cast<size_t>(cfg.reps));
            for (long rep = 0; rep < cfg.reps; ++rep) {
                v[static_cast<size_t>(rep)] = mlmc_err[static_cast<size_t>(rep)][static_cast<size_t>(k)];
                w[static_cast<size_t>(rep)] = sgd_err[static_cast<size_t>(rep)][static_cast<size_t>(k)];
            }
            result.rows.push_back(
                {id, std::string("mlmc_") + names[k], mean_of(v), se_of(v), cfg.reps});
            result.rows.push_back(
                {id, std::string("paired_sgd_") + names[k], mean_of(w), se_of(w), cfg.reps});
        }
        result.rows.push_back({id, "mlmc_total_draws_mean", mean_of(draws), se_of(draws), cfg.reps});
        double frac = 0.0;
        for (char c : beats) frac += c;
        frac /= static_cast<double>(cfg.reps);
        result.rows.push_back(
            {id, "mlmc_beats_sgd_linf_frac", frac, binom_se(frac, cfg.reps), cfg.reps});
    }

    for (size_t bi = 0; bi < budgets.size(); ++bi) {
        std::vector<std::array<double, 3>> sgd_err(static_cast<size_t>(cfg.reps));
        parallel_for(cfg.reps, cfg.threads, [&](long rep) {
            RngStream rep_seeder(cfg.seed, 1000 + bi, static_cast<std::uint64_t>(rep));
            SgdConfig sgd;
            sgd.lr = cfg.sgd_lr;
            sgd.budget = budgets[bi];
            sgd.seed = rep_seeder.next_u64();
            sgd_err[static_cast<size_t>(rep)] = err_norms(solve_sgd(family, data, spec, sgd).beta);
        });
        const std::string id = "budget=" + std::to_string(budgets[bi]);
        const char* names[3] = {"l1", "l2", "linf"};
        for (int k = 0; k < 3; ++k) {
            std::vector<double> v(static_cast<size_t>(cfg.reps));
            for (long rep = 0; rep < cfg.reps; ++rep)
                v[static_cast<size_t>(rep)] = sgd_err[static_cast<size_t>(rep)][static_cast<size_t>(k)];
            result.rows.push_back(
                {id, std::string("sgd_") + names[k], mean_of(v), se_of(v), cfg.reps});
        }
    }
    return result;
}

}  // namespace drglm
