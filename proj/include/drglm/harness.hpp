#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "drglm/glm.hpp"

namespace drglm {

// Linear simulation design: X rows i.i.d. standard normal,
// Y = X beta0 + noise_sd * eps with eps i.i.d. standard normal.
struct SimSpec {
    long n = 0;
    long d = 0;
    Eigen::VectorXd beta0;
    double noise_sd = 1.0;
    std::uint64_t seed = 0;
};

Dataset gen_linear_data(const SimSpec& spec);

// Flat result table emitted as CSV (config,metric,value,std_err,reps).
struct ResultRow {
    std::string config_id;
    std::string metric;
    double value = 0.0;
    double std_err = 0.0;  // 0 when not applicable
    long reps = 1;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
};

void write_result_csv(const std::string& path, const ExperimentResult& result);
ExperimentResult read_result_csv(const std::string& path);

// Coverage experiment: per (n, alpha), tune delta in oracle mode, fit the
// closed-form dropout estimator, and count how often the in-sample dropout
// loss covers the true population loss.  OLS (delta = 0) and K-fold
// cross-validated delta run as baselines.
struct CoverageConfig {
    std::vector<long> n_list{1000};
    long d = 10;
    std::vector<double> alpha_list{0.2, 0.1, 0.05};
    long reps = 500;
    Eigen::VectorXd beta0;   // ones(d) when empty
    double noise_sd = 10.0;
    long cv_folds = 10;
    std::vector<double> cv_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    std::uint64_t seed = 0;
    int threads = 1;
};

ExperimentResult run_coverage(const CoverageConfig& cfg);

// SGD-vs-MLMC divergence experiment on the fixed instance d=100, n=50,
// beta0 = ones, noise_sd = 10.  For each L: `reps` MLMC runs, each paired
// with an SGD run at that replica set's realized draw budget; additionally
// plain SGD curves over budget_grid (matched to expected MLMC cost when
// empty).  Errors are measured against the closed-form in-sample target.
struct DivergenceConfig {
    std::vector<long> l_grid{400, 1600};
    std::vector<long> budget_grid;  // empty -> n*2^{m0+1}*r/(2r-1)*L per L
    long reps = 20;
    double alpha = 0.1;
    double r = 0.6464466094067263;
    int m0 = 3;
    double sgd_lr = 1e-4;
    std::uint64_t seed = 0;
    int threads = 1;
};

ExperimentResult run_divergence(const DivergenceConfig& cfg);

// K-fold cross-validation over delta_grid: rows are shuffled once under
// `seed`, each candidate is trained per fold and scored by the held-out
// unit-dispersion delta=0 loss; returns the grid value with the smallest
// total (first such value on ties).
double run_cv_delta(const GlmFamily& family, const Dataset& data, long folds,
                    const std::vector<double>& delta_grid, std::uint64_t seed);

}  // namespace drglm
