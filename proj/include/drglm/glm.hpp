#pragma once

#include <Eigen/Dense>
#include <string>

#include "drglm/gd.hpp"
#include "drglm/util.hpp"

namespace drglm {

enum class FamilyKind { Linear, Logistic, Poisson };

// Canonical exponential family f(y|x) = h(y,phi) exp((y eta - psi(eta)) / a(phi))
// with natural parameter eta = beta'x.  All members are pure.
struct GlmFamily {
    FamilyKind kind = FamilyKind::Linear;
    // psi_ddot bounded above (holds for Linear and Logistic).  Poisson violates
    // it, so results that lean on bounded curvature are not covered there.
    bool bounded_curvature = true;

    double psi(double eta) const;       // log-partition
    double psi_dot(double eta) const;   // mean function
    double psi_ddot(double eta) const;  // variance function
    double dispersion(double phi) const;          // a(phi)
    double log_base(double y, double phi) const;  // ln h(y, phi)

    // true when a(phi) = phi is a free parameter (Linear); otherwise a == 1.
    bool has_free_dispersion() const { return kind == FamilyKind::Linear; }
    const char* name() const;
    const char* response_domain() const;
};

GlmFamily make_family(FamilyKind kind);
GlmFamily family_from_name(const std::string& name);

struct ModelParams {
    Eigen::VectorXd beta;
    double phi = 1.0;
};

struct Dataset {
    Eigen::MatrixXd x;  // n x d
    Eigen::VectorXd y;  // n

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index d() const { return x.cols(); }
};

// CSV layout: header "y,x1,...,xd", one observation per row, decimal floats.
// Missing fields, non-numeric fields, and ragged rows are rejected.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const Dataset& data);

// Enforces the response domain (Logistic: y in {0,1}; Poisson: y in
// nonnegative integers) and finiteness of all entries.
void check_response(const GlmFamily& family, const Dataset& data);

// Per-observation negative log-likelihood:
//   -ln h(y,phi) + (psi(beta'x) - y beta'x) / a(phi).
double loss(const GlmFamily& family, const Eigen::VectorXd& x_row, double y,
            const ModelParams& params);

double avg_neg_loglik(const GlmFamily& family, const Dataset& data, const ModelParams& params);

// Gradient in beta of avg_neg_loglik: (1/n) sum_i x_i (psi_dot(x_i'beta) - y_i) / a(phi).
Eigen::VectorXd nll_gradient(const GlmFamily& family, const Dataset& data,
                             const ModelParams& params);

// Thrown when an iterative solver hits its cap; carries the last iterate so
// callers can inspect how far it got.
struct SolveFailure : Error {
    SolveFailure(const std::string& msg, Eigen::VectorXd iterate)
        : Error(msg), last_iterate(std::move(iterate)) {}
    Eigen::VectorXd last_iterate;
};

// Maximum likelihood fit.  beta minimizes avg_neg_loglik via gradient descent
// (backtracking by default, grad inf-norm tolerance from cfg); for Linear,
// phi is the mean squared residual floored at 1e-12, otherwise phi = 1.
ModelParams fit_mle(const GlmFamily& family, const Dataset& data, const GdConfig& cfg = {});

}  // namespace drglm
