#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "drglm/dropout.hpp"
#include "drglm/glm.hpp"
#include "drglm/rng.hpp"
#include "oracles.hpp"

using drglm::DropoutSpec;
using drglm::FamilyKind;
using drglm::make_dropout_spec;
using drglm::Mask;
using drglm::RngStream;

namespace {

drglm::Dataset random_linear(long n, long d, std::uint64_t seed) {
    drglm::Dataset data;
    data.x.resize(n, d);
    data.y.resize(n);
    RngStream rng(seed, 0, 0);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < d; ++j) data.x(i, j) = rng.normal();
        data.y[i] = data.x.row(i).sum() * 0.5 + rng.normal();
    }
    return data;
}

}  // namespace

TEST_CASE("dropout spec validation and the homogeneous flag") {
    const DropoutSpec uni = make_dropout_spec(4, 0.3);
    CHECK(uni.d() == 4);
    CHECK(uni.homogeneous);
    CHECK(uni.scale(2) == doctest::Approx(1.0 / 0.7).epsilon(1e-15));

    Eigen::VectorXd mixed(3);
    mixed << 0.1, 0.2, 0.3;
    CHECK_FALSE(make_dropout_spec(mixed).homogeneous);
    Eigen::VectorXd flat(3);
    flat << 0.2, 0.2, 0.2;
    CHECK(make_dropout_spec(flat).homogeneous);

    CHECK_THROWS_AS(make_dropout_spec(3, 1.0), drglm::Error);
    CHECK_THROWS_AS(make_dropout_spec(3, -0.1), drglm::Error);
    Eigen::VectorXd bad(2);
    bad << 0.5, 1.5;
    CHECK_THROWS_AS(make_dropout_spec(bad), drglm::Error);
    CHECK_THROWS_AS(make_dropout_spec(0, 0.5), drglm::Error);
}

TEST_CASE("sample_mask: delta=0 degenerates to all ones") {
    const DropoutSpec spec = make_dropout_spec(5, 0.0);
    RngStream rng(1, 0, 0);
    for (int i = 0; i < 100; ++i) {
        const Mask m = drglm::sample_mask(spec, rng);
        for (long j = 0; j < 5; ++j) CHECK(m[j] == 1.0);
    }
}

TEST_CASE("sample_mask: entries are exactly 0 or the scale factor") {
    Eigen::VectorXd deltas(3);
    deltas << 0.9, 0.25, 0.6;
    const DropoutSpec spec = make_dropout_spec(deltas);
    RngStream rng(2, 0, 0);
    CHECK(spec.scale(0) == doctest::Approx(10.0).epsilon(1e-15));
    long nonzero0 = 0;
    for (int i = 0; i < 2000; ++i) {
        const Mask m = drglm::sample_mask(spec, rng);
        for (long j = 0; j < 3; ++j) {
            const bool zero = m[j] == 0.0;
            const bool scaled = m[j] == spec.scale(j);  // bit-exact
            CHECK((zero || scaled));
        }
        nonzero0 += m[0] != 0.0;
    }
    // the delta=0.9 coordinate survives about 10% of the time
    CHECK(nonzero0 > 120);
    CHECK(nonzero0 < 280);
}

TEST_CASE("sample_mask: empirical mean is one per coordinate") {
    const DropoutSpec spec = make_dropout_spec(4, 0.5);
    RngStream rng(3, 0, 0);
    const long n = 100000;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(4);
    for (long i = 0; i < n; ++i) acc += drglm::sample_mask(spec, rng);
    acc /= static_cast<double>(n);
    // Var(xi) = delta/(1-delta) = 1 at delta = 0.5
    const double band = 3.0 / std::sqrt(static_cast<double>(n));
    for (long j = 0; j < 4; ++j) CHECK(std::abs(acc[j] - 1.0) < band);
}

TEST_CASE("sample_mask is deterministic under the stream key") {
    const DropoutSpec spec = make_dropout_spec(6, 0.37);
    RngStream a(11, 4, 9), b(11, 4, 9);
    for (int i = 0; i < 50; ++i) {
        const Mask ma = drglm::sample_mask(spec, a);
        const Mask mb = drglm::sample_mask(spec, b);
        CHECK((ma - mb).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("enumerate_masks: one-coordinate and symmetric two-coordinate cases") {
    const auto one = drglm::enumerate_masks(make_dropout_spec(1, 0.3));
    REQUIRE(one.masks.size() == 2);
    double p_zero = 0.0, p_keep = 0.0;
    for (size_t k = 0; k < 2; ++k) {
        if (one.masks[k][0] == 0.0) p_zero = one.probs[k];
        else {
            CHECK(one.masks[k][0] == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
            p_keep = one.probs[k];
        }
    }
    CHECK(p_zero == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(p_keep == doctest::Approx(0.7).epsilon(1e-15));

    const auto two = drglm::enumerate_masks(make_dropout_spec(2, 0.5));
    REQUIRE(two.masks.size() == 4);
    for (size_t k = 0; k < 4; ++k) {
        CHECK(two.probs[k] == doctest::Approx(0.25).epsilon(1e-15));
        for (long j = 0; j < 2; ++j)
            CHECK((two.masks[k][j] == 0.0 || two.masks[k][j] == 2.0));
    }
}

TEST_CASE("enumerate_masks: heterogeneous probabilities match the product oracle") {
    Eigen::VectorXd deltas(3);
    deltas << 0.1, 0.2, 0.3;
    const auto en = drglm::enumerate_masks(make_dropout_spec(deltas));
    REQUIRE(en.masks.size() == 8);
    double total = 0.0;
    for (size_t k = 0; k < 8; ++k) {
        double prob = 1.0;
        for (long j = 0; j < 3; ++j)
            prob *= en.masks[k][j] == 0.0 ? deltas[j] : (1.0 - deltas[j]);
        CHECK(en.probs[k] == doctest::Approx(prob).epsilon(1e-14));
        total += en.probs[k];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("enumerate_masks: per-coordinate mean is one") {
    Eigen::VectorXd deltas(5);
    deltas << 0.05, 0.2, 0.45, 0.7, 0.9;
    const auto en = drglm::enumerate_masks(make_dropout_spec(deltas));
    for (long j = 0; j < 5; ++j) {
        double mean = 0.0;
        for (size_t k = 0; k < en.masks.size(); ++k) mean += en.probs[k] * en.masks[k][j];
        CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("enumerate_masks refuses large dimensions and points at Monte Carlo") {
    const DropoutSpec spec = make_dropout_spec(25, 0.5);
    try {
        drglm::enumerate_masks(spec);
        FAIL("expected an error");
    } catch (const drglm::Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("Monte Carlo") != std::string::npos);
    }
}

TEST_CASE("one_zero_masks enumerates the set A") {
    const auto a1 = drglm::one_zero_masks(1);
    REQUIRE(a1.size() == 1);
    CHECK(a1[0][0] == 0.0);

    const auto a3 = drglm::one_zero_masks(3);
    REQUIRE(a3.size() == 3);
    for (long j = 0; j < 3; ++j) {
        CHECK(a3[static_cast<size_t>(j)][j] == 0.0);
        CHECK(a3[static_cast<size_t>(j)].sum() == doctest::Approx(2.0));
    }

    const auto a8 = drglm::one_zero_masks(8);
    REQUIRE(a8.size() == 8);
    for (const auto& m : a8) {
        CHECK(m.sum() == doctest::Approx(7.0));
        for (long j = 0; j < 8; ++j) CHECK((m[j] == 0.0 || m[j] == 1.0));
    }
}

TEST_CASE("adversary_value: affine functions are pinned by the mean constraint") {
    const auto [value, dist] = drglm::adversary_value([](double t) { return t; }, 0.4, 301);
    CHECK(value == doctest::Approx(1.0).epsilon(1e-12));
    double mean = 0.0, wsum = 0.0;
    for (size_t k = 0; k < dist.support.size(); ++k) {
        mean += dist.weights[k] * dist.support[k];
        wsum += dist.weights[k];
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("adversary_value: quadratic reaches the endpoint Bernoulli value") {
    const auto [value, dist] = drglm::adversary_value([](double t) { return t * t; }, 0.5, 401);
    CHECK(value == doctest::Approx(2.0).epsilon(1e-12));
    // maximizer is the two-point law on {0, 2} with weights {0.5, 0.5}
    REQUIRE(dist.support.size() == 2);
    const size_t hi = dist.support[0] > dist.support[1] ? 0 : 1;
    CHECK(dist.support[1 - hi] == doctest::Approx(0.0));
    CHECK(dist.support[hi] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(dist.weights[hi] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("adversary_value: softplus matches the closed-form endpoint law") {
    const double delta = 0.3;
    const auto f = [](double t) { return std::log1p(std::exp(3.0 * t)); };
    const auto [value, dist] = drglm::adversary_value(f, delta, 201);
    const double upper = 1.0 / (1.0 - delta);
    const double endpoint = delta * f(0.0) + (1.0 - delta) * f(upper);
    CHECK(std::abs(value - endpoint) < 1e-9);
}

TEST_CASE("adversary_value is monotone nondecreasing in delta for convex f") {
    const auto f = [](double t) { return (t - 0.4) * (t - 0.4) + 0.1 * t * t * t * t; };
    double prev = -1e300;
    for (double delta : {0.05, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8}) {
        const double value = drglm::adversary_value(f, delta, 501).first;
        CHECK(value >= prev - 1e-12);
        prev = value;
    }
}

TEST_CASE("adversary_value rejects non-finite evaluations and tiny grids") {
    CHECK_THROWS_AS(
        drglm::adversary_value([](double t) { return 1.0 / t; }, 0.4, 101),  // f(0) = inf
        drglm::Error);
    CHECK_THROWS_AS(drglm::adversary_value([](double t) { return t; }, 0.4, 2), drglm::Error);
}

TEST_CASE("certification: delta=0 leaves nature a single feasible law") {
    const drglm::Dataset data = random_linear(10, 3, 5);
    const drglm::GlmFamily fam = drglm::make_family(FamilyKind::Linear);
    Eigen::VectorXd beta(3);
    beta << 0.5, -0.2, 0.3;
    RngStream rng(7, 0, 0);
    const auto report = drglm::certify_least_favorable(fam, data, make_dropout_spec(3, 0.0),
                                                       {beta, 1.0}, 50, rng);
    // only the point mass at 1 is feasible, so every trial ties Q*
    CHECK(report.max_violation <= 1e-12);
    CHECK(report.max_other_value == doctest::Approx(report.dropout_value).epsilon(1e-12));
}

TEST_CASE("certification: linear instance, 200 random product laws") {
    const drglm::Dataset data = random_linear(10, 3, 13);
    const drglm::GlmFamily fam = drglm::make_family(FamilyKind::Linear);
    Eigen::VectorXd beta(3);
    beta << 0.8, -0.5, 0.2;
    RngStream rng(17, 0, 0);
    const auto report = drglm::certify_least_favorable(fam, data, make_dropout_spec(3, 0.4),
                                                       {beta, 1.5}, 200, rng);
    CHECK(report.trials == 200);
    CHECK(report.max_violation <= 1e-9);
    CHECK(report.dropout_value >= report.max_other_value - 1e-9);
}

TEST_CASE("certification: logistic instance with heterogeneous deltas") {
    drglm::Dataset data = random_linear(12, 4, 19);
    for (long i = 0; i < data.n(); ++i) data.y[i] = data.y[i] > 0.0 ? 1.0 : 0.0;
    const drglm::GlmFamily fam = drglm::make_family(FamilyKind::Logistic);
    Eigen::VectorXd beta(4), deltas(4);
    beta << 0.4, -0.7, 0.1, 0.3;
    deltas << 0.2, 0.35, 0.5, 0.1;
    RngStream rng(23, 0, 0);
    const auto report = drglm::certify_least_favorable(fam, data, make_dropout_spec(deltas),
                                                       {beta, 1.0}, 100, rng);
    CHECK(report.max_violation <= 1e-9);
}

TEST_CASE("certification guards its instance-size preconditions") {
    const drglm::GlmFamily fam = drglm::make_family(FamilyKind::Linear);
    Eigen::VectorXd beta9 = Eigen::VectorXd::Zero(9);
    const drglm::Dataset wide = random_linear(10, 9, 29);
    RngStream rng(1, 0, 0);
    CHECK_THROWS_AS(drglm::certify_least_favorable(fam, wide, make_dropout_spec(9, 0.3),
                                                   {beta9, 1.0}, 10, rng),
                    drglm::Error);
    const drglm::Dataset tall = random_linear(51, 3, 31);
    Eigen::VectorXd beta3 = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(drglm::certify_least_favorable(fam, tall, make_dropout_spec(3, 0.3),
                                                   {beta3, 1.0}, 10, rng),
                    drglm::Error);
}
