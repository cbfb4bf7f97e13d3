#include "drglm/dropout.hpp"

#include <cmath>
#include <limits>

#include "drglm/util.hpp"

namespace drglm {

namespace {

void validate_spec(const DropoutSpec& spec) {
    require(spec.deltas.size() >= 1, "dropout: spec needs at least one coordinate");
    for (Eigen::Index j = 0; j < spec.deltas.size(); ++j)
        require(spec.deltas[j] >= 0.0 && spec.deltas[j] < 1.0,
                "dropout: delta must lie in [0,1)");
}

}  // namespace

DropoutSpec make_dropout_spec(const Eigen::VectorXd& deltas) {
    DropoutSpec spec;
    spec.deltas = deltas;
    validate_spec(spec);
    spec.homogeneous = true;
    for (Eigen::Index j = 1; j < deltas.size(); ++j)
        if (deltas[j] != deltas[0]) spec.homogeneous = false;
    return spec;
}

DropoutSpec make_dropout_spec(Eigen::Index d, double delta) {
    return make_dropout_spec(Eigen::VectorXd::Constant(d, delta));
}

Mask sample_mask(const DropoutSpec& spec, RngStream& rng) {
    Mask mask(spec.d());
    for (Eigen::Index j = 0; j < spec.d(); ++j) mask[j] = sample_mask_entry(spec, j, rng);
    return mask;
}

MaskEnumeration enumerate_masks(const DropoutSpec& spec) {
    const Eigen::Index d = spec.d();
    require(d <= 24,
            "enumerate_masks: 2^d too large for d > 24; use the Monte Carlo objective instead");
    const long total = 1L << d;
    MaskEnumeration out;
    out.masks.reserve(static_cast<size_t>(total));
    out.probs.reserve(static_cast<size_t>(total));
    for (long s = 0; s < total; ++s) {
        Mask mask(d);
        double prob = 1.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            // bit j set <=> coordinate j dropped
            if ((s >> j) & 1) {
                mask[j] = 0.0;
                prob *= spec.deltas[j];
            } else {
                mask[j] = spec.scale(j);
                prob *= 1.0 - spec.deltas[j];
            }
        }
        out.masks.push_back(std::move(mask));
        out.probs.push_back(prob);
    }
    return out;
}

std::vector<Eigen::VectorXd> one_zero_masks(Eigen::Index d) {
    require(d >= 1, "one_zero_masks: d must be at least 1");
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::VectorXd mask = Eigen::VectorXd::Ones(d);
        mask[j] = 0.0;
        out.push_back(std::move(mask));
    }
    return out;
}

std::pair<double, FeasibleNoiseDist> adversary_value(const std::function<double(double)>& f,
                                                     double delta, int grid_size) {
    require(delta >= 0.0 && delta < 1.0, "adversary_value: delta must lie in [0,1)");
    require(grid_size >= 3, "adversary_value: grid_size must be at least 3");
    const double upper = 1.0 / (1.0 - delta);

    std::vector<double> grid(static_cast<size_t>(grid_size));
    std::vector<double> fval(static_cast<size_t>(grid_size));
    for (int i = 0; i < grid_size; ++i) {
        // endpoints exact: i=0 -> 0, i=last -> upper
        grid[static_cast<size_t>(i)] = upper * static_cast<double>(i) / (grid_size - 1);
        fval[static_cast<size_t>(i)] = f(grid[static_cast<size_t>(i)]);
        require(std::isfinite(fval[static_cast<size_t>(i)]),
                "adversary_value: f not finite on the support grid");
    }

    double best = -std::numeric_limits<double>::infinity();
    FeasibleNoiseDist best_dist;
    for (int i = 0; i < grid_size; ++i) {
        if (grid[static_cast<size_t>(i)] > 1.0) break;  // need a point at or below the mean
        for (int j = grid_size - 1; j >= i; --j) {
            const double a = grid[static_cast<size_t>(i)];
            const double b = grid[static_cast<size_t>(j)];
            if (b < 1.0) break;  // need a point at or above the mean
            double wa, wb;
            if (b - a < 1e-14) {  // both points are the mean itself
                wa = 1.0;
                wb = 0.0;
            } else {
                wa = (b - 1.0) / (b - a);
                wb = (1.0 - a) / (b - a);
            }
            const double value = wa * fval[static_cast<size_t>(i)] + wb * fval[static_cast<size_t>(j)];
            if (value > best) {
                best = value;
                best_dist.support = {a, b};
                best_dist.weights = {wa, wb};
            }
        }
    }
    return {best, best_dist};
}

namespace {

// Draws a random two-point law on [0, (1-delta)^{-1}] with mean exactly 1.
FeasibleNoiseDist random_feasible_dist(double delta, RngStream& rng) {
    const double upper = 1.0 / (1.0 - delta);
    const double a = rng.uniform();                        // in [0, 1)
    const double b = 1.0 + rng.uniform() * (upper - 1.0);  // in [1, upper)
    FeasibleNoiseDist dist;
    if (b - a < 1e-12) {
        dist.support = {1.0};
        dist.weights = {1.0};
        return dist;
    }
    dist.support = {a, b};
    dist.weights = {(b - 1.0) / (b - a), (1.0 - a) / (b - a)};
    return dist;
}

// Exact E over the product of per-coordinate supports of the average loss.
double exact_product_expectation(const GlmFamily& family, const Dataset& data,
                                 const std::vector<FeasibleNoiseDist>& coord_dists,
                                 const ModelParams& params) {
    const Eigen::Index d = data.d();
    // mixed-radix odometer over support indices
    std::vector<size_t> idx(static_cast<size_t>(d), 0);
    Eigen::VectorXd xi(d);
    double acc = 0.0;
    while (true) {
        double prob = 1.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto& dist = coord_dists[static_cast<size_t>(j)];
            xi[j] = dist.support[idx[static_cast<size_t>(j)]];
            prob *= dist.weights[idx[static_cast<size_t>(j)]];
        }
        if (prob > 0.0) {
            const Eigen::VectorXd beta_masked = params.beta.cwiseProduct(xi);
            double loss_acc = 0.0;
            const double a_phi = family.dispersion(params.phi);
            for (Eigen::Index i = 0; i < data.n(); ++i) {
                const double eta = data.x.row(i).dot(beta_masked);
                loss_acc += -family.log_base(data.y[i], params.phi) +
                            (family.psi(eta) - data.y[i] * eta) / a_phi;
            }
            acc += prob * loss_acc / static_cast<double>(data.n());
        }
        // advance odometer
        Eigen::Index pos = 0;
        while (pos < d) {
            ++idx[static_cast<size_t>(pos)];
            if (idx[static_cast<size_t>(pos)] < coord_dists[static_cast<size_t>(pos)].support.size())
                break;
            idx[static_cast<size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == d) break;
    }
    return acc;
}

}  // namespace

CertifyReport certify_least_favorable(const GlmFamily& family, const Dataset& data,
                                      const DropoutSpec& spec, const ModelParams& params,
                                      long trials, RngStream& rng) {
    require(data.d() <= 8 && data.n() <= 50,
            "certify_least_favorable: exact product enumeration needs d <= 8, n <= 50");
    require(spec.d() == data.d(), "certify_least_favorable: spec and data dimensions disagree");
    require(params.beta.size() == data.d(),
            "certify_least_favorable: beta and data dimensions disagree");
    require(trials >= 1, "certify_least_favorable: trials must be at least 1");

    const Eigen::Index d = data.d();
    std::vector<FeasibleNoiseDist> qstar(static_cast<size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        if (spec.deltas[j] == 0.0) {
            qstar[static_cast<size_t>(j)].support = {1.0};
            qstar[static_cast<size_t>(j)].weights = {1.0};
        } else {
            qstar[static_cast<size_t>(j)].support = {0.0, spec.scale(j)};
            qstar[static_cast<size_t>(j)].weights = {spec.deltas[j], 1.0 - spec.deltas[j]};
        }
    }

    CertifyReport report;
    report.trials = trials;
    report.dropout_value = exact_product_expectation(family, data, qstar, params);
    report.max_other_value = -std::numeric_limits<double>::infinity();
    report.max_violation = -std::numeric_limits<double>::infinity();

    std::vector<FeasibleNoiseDist> q(static_cast<size_t>(d));
    for (long t = 0; t < trials; ++t) {
        for (Eigen::Index j = 0; j < d; ++j) {
            q[static_cast<size_t>(j)] = random_feasible_dist(spec.deltas[j], rng);
            // feasibility assertion: mean must be exactly 1 (up to roundoff)
            double mean = 0.0;
            for (size_t k = 0; k < q[static_cast<size_t>(j)].support.size(); ++k)
                mean += q[static_cast<size_t>(j)].support[k] * q[static_cast<size_t>(j)].weights[k];
            require(std::abs(mean - 1.0) <= 1e-10,
                    "certify_least_favorable: sampled distribution violated the mean constraint");
        }
        const double value = exact_product_expectation(family, data, q, params);
        report.max_other_value = std::max(report.max_other_value, value);
        report.max_violation = std::max(report.max_violation, value - report.dropout_value);
    }
    return report;
}

}  // namespace drglm
