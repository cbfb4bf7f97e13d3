#include "drglm/linreg.hpp"

#include <cmath>

#include "drglm/util.hpp"

namespace drglm {

namespace {

// Symmetric solve with a singularity gate and one refinement pass.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                          const char* singular_msg) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double hi = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() <= 1e-12 * std::max(hi, 1.0)) throw Error(singular_msg);

    const auto apply_inverse = [&](const Eigen::VectorXd& v) {
        return (eig.eigenvectors() *
                (eig.eigenvectors().transpose() * v).cwiseQuotient(ev))
            .eval();
    };
    Eigen::VectorXd x = apply_inverse(rhs);
    x.noalias() += apply_inverse(rhs - m * x);

    const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
    require((m * x - rhs).lpNorm<Eigen::Infinity>() <= 1e-10 * scale,
            "linreg: solve residual exceeded tolerance");
    return x;
}

}  // namespace

RidgeDropoutSolution dropout_ridge(const Dataset& data, double delta) {
    require(data.n() > 0, "dropout_ridge: empty dataset");
    require(delta >= 0.0 && delta < 1.0, "dropout_ridge: delta must lie in [0,1)");

    RidgeDropoutSolution sol;
    sol.delta = delta;
    const Eigen::MatrixXd gram = data.x.transpose() * data.x;
    sol.lambda_diag = gram.diagonal();

    Eigen::MatrixXd m = gram;
    m.diagonal() += (delta / (1.0 - delta)) * sol.lambda_diag;
    sol.beta = solve_spd(m, data.x.transpose() * data.y,
                         "dropout_ridge: singular system (rank-deficient X at this delta)");
    return sol;
}

Eigen::VectorXd population_limit_lr(const Eigen::MatrixXd& second_moment,
                                    const Eigen::VectorXd& cross_moment, double delta) {
    require(second_moment.rows() == second_moment.cols(),
            "population_limit_lr: second moment must be square");
    require(second_moment.rows() == cross_moment.size(),
            "population_limit_lr: moment dimensions disagree");
    require(delta >= 0.0 && delta < 1.0, "population_limit_lr: delta must lie in [0,1)");
    require(second_moment.isApprox(second_moment.transpose(), 1e-10),
            "population_limit_lr: second moment must be symmetric");

    Eigen::MatrixXd m = second_moment;
    m.diagonal() += (delta / (1.0 - delta)) * second_moment.diagonal();
    return solve_spd(m, cross_moment,
                     "population_limit_lr: second moment not positive definite");
}

}  // namespace drglm
