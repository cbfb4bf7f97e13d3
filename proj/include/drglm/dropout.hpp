#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "drglm/glm.hpp"
#include "drglm/rng.hpp"

namespace drglm {

// Per-coordinate dropout rates.  Coordinate j keeps the scaled value
// (1-delta_j)^{-1} with probability 1-delta_j and is zeroed otherwise, so
// every mask entry has mean one.
struct DropoutSpec {
    Eigen::VectorXd deltas;     // each in [0,1)
    bool homogeneous = true;    // all deltas equal

    Eigen::Index d() const { return deltas.size(); }
    double scale(Eigen::Index j) const { return 1.0 / (1.0 - deltas[j]); }
};

DropoutSpec make_dropout_spec(const Eigen::VectorXd& deltas);
DropoutSpec make_dropout_spec(Eigen::Index d, double delta);

// A realized mask: entry j is exactly 0 or (1-delta_j)^{-1}.
using Mask = Eigen::VectorXd;

struct MaskEnumeration {
    std::vector<Mask> masks;    // all 2^d masks
    std::vector<double> probs;  // exact product probabilities, sum to 1
};

// One of the d two-point feasible laws: points in [0, (1-delta)^{-1}] with
// weights summing to 1 and weighted mean exactly 1.
struct FeasibleNoiseDist {
    std::vector<double> support;
    std::vector<double> weights;
};

Mask sample_mask(const DropoutSpec& spec, RngStream& rng);

// Samples coordinate j of a mask in place; used by hot loops that avoid the
// Mask allocation.  Consumes exactly d uniforms per full mask either way.
inline double sample_mask_entry(const DropoutSpec& spec, Eigen::Index j, RngStream& rng) {
    return rng.uniform() < spec.deltas[j] ? 0.0 : spec.scale(j);
}

// All 2^d masks with product probabilities.  Guarded at d <= 24; larger
// dimensions must go through the Monte Carlo path.
MaskEnumeration enumerate_masks(const DropoutSpec& spec);

// The set A: binary vectors in {0,1}^d with exactly one zero, element j
// zeroing coordinate j.  (Unscaled — these are the first-order bias masks.)
std::vector<Eigen::VectorXd> one_zero_masks(Eigen::Index d);

// Brute-force adversary: maximizes E_Q[f(zeta)] over two-point mean-one laws
// supported on a uniform grid over [0, (1-delta)^{-1}] containing both
// endpoints.  For convex f the optimum is the endpoint law with weights
// (delta, 1-delta), which the grid represents exactly.
std::pair<double, FeasibleNoiseDist> adversary_value(const std::function<double(double)>& f,
                                                     double delta, int grid_size);

struct CertifyReport {
    double dropout_value = 0.0;   // exact E_{Q*}[avg loss] under scaled-Bernoulli dropout
    double max_other_value = 0.0; // best value any sampled feasible product law achieved
    double max_violation = 0.0;   // max over trials of E_Q - E_{Q*}  (<= 0 when certified)
    long trials = 0;
};

// Samples `trials` random feasible two-point product distributions and checks
// none beats the dropout law on the exact (product-support enumerated)
// expected loss.  Small instances only: d <= 8, n <= 50.
CertifyReport certify_least_favorable(const GlmFamily& family, const Dataset& data,
                                      const DropoutSpec& spec, const ModelParams& params,
                                      long trials, RngStream& rng);

}  // namespace drglm
