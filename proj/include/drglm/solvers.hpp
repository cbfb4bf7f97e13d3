#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "drglm/dropout.hpp"
#include "drglm/gd.hpp"
#include "drglm/glm.hpp"

namespace drglm {

struct SgdConfig {
    double lr = 1e-4;
    long batch = 1;
    long budget = 1;        // total mask/gradient draws consumed
    Eigen::VectorXd init;   // zeros when empty
    std::uint64_t seed = 0;
};

// Unbiased multi-level Monte Carlo solver configuration.  The variance
// guarantee needs r in (1/2, 3/4); the default is the cost-optimal
// 1 - 2^{-3/2}.  Values in [3/4, 1) still run (unbiased, possibly infinite
// variance) so the failure mode can be demonstrated.
struct MlmcConfig {
    double r = 0.6464466094067263;
    int m0 = 3;            // burn-in level
    long replicas = 1;     // L
    GdConfig inner;        // inner SAA solver; its init field is managed internally
    std::uint64_t master_seed = 0;
    int threads = 1;       // replica parallelism; never changes the output
};

struct MlmcReplica {
    int level = 0;               // K_l = m0 + geometric draw
    Eigen::VectorXd z;           // Z_l
    long draws_used = 0;         // n * 2^{K_l + 1}
    // diagnostics for variance analysis
    Eigen::VectorXd theta_m0;    // burn-in SAA solution
    Eigen::VectorXd delta_bar;   // coupled correction before the 1/p(K) scaling
};

struct MlmcReport {
    Eigen::VectorXd estimate;            // mean of Z_l over replicas
    std::vector<MlmcReplica> per_replica;
    long total_draws = 0;                // sum of draws_used
    double empirical_variance = 0.0;     // trace of the sample covariance of Z
    double expected_cost_formula_value = 0.0;  // n * 2^{m0+1} * r / (2r - 1)
    std::optional<double> phi_delta0;    // dispersion from the delta=0 fit; absent
                                         // when that fit is infeasible (singular X'X)
};

// Gradient descent on the exact (mask-enumerated) dropout objective.  Linear
// uses the equivalent quadratic form and is exact-enumeration free; other
// families require enumerate_masks to be feasible.
ModelParams solve_exact_gd(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                           const GdConfig& cfg = {});

// Dropout SGD: each draw picks a data row uniformly and a fresh mask; the
// update averages per-draw gradients over the batch.  Returns the final
// iterate with phi = 1 (dispersion plays no role in the beta recursion).
ModelParams solve_sgd(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      const SgdConfig& cfg);

// Sample-average approximation with K masks per row, frozen during the inner
// optimization.
ModelParams solve_saa(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      long masks_per_row, const GdConfig& inner, std::uint64_t seed);

// Level sampler used by mlmc_solve for replica l: K = m0 + m with
// m ~ Geometric(r) on {0,1,2,...}, P(m) = r(1-r)^m.  Exposed so cost
// accounting can be simulated without running inner solves.
int sample_mlmc_level(const MlmcConfig& cfg, std::uint64_t replica);

// Unbiased MLMC estimator of the exact dropout solution.  Per replica l:
// draw K, draw 2^{K+1} masks per row, solve the SAA problems on the first
// 2^{m0} draws, on the odd/even halves, and on all draws; combine as
//   Z_l = (theta_full - (theta_odd + theta_even)/2) / (r(1-r)^{K-m0}) + theta_m0.
// Replicas use independent (master_seed, replica, row) streams, so any
// thread count gives bit-identical output.  A failed inner solve aborts the
// whole run; silently dropping the replica would bias the mean.
MlmcReport mlmc_solve(const GlmFamily& family, const Dataset& data, const DropoutSpec& spec,
                      const MlmcConfig& cfg);

}  // namespace drglm
