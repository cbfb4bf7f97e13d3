#include "drglm/glm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace drglm {

namespace {

// Overflow-safe logistic sigmoid.
double sigmoid(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

double GlmFamily::psi(double eta) const {
    switch (kind) {
        case FamilyKind::Linear: return 0.5 * eta * eta;
        case FamilyKind::Logistic: return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
        case FamilyKind::Poisson: return std::exp(eta);
    }
    require(false, "unreachable family kind");
    return 0.0;
}

double GlmFamily::psi_dot(double eta) const {
    switch (kind) {
        case FamilyKind::Linear: return eta;
        case FamilyKind::Logistic: return sigmoid(eta);
        case FamilyKind::Poisson: return std::exp(eta);
    }
    require(false, "unreachable family kind");
    return 0.0;
}

double GlmFamily::psi_ddot(double eta) const {
    switch (kind) {
        case FamilyKind::Linear: return 1.0;
        case FamilyKind::Logistic: {
            const double s = sigmoid(eta);
            return s * (1.0 - s);
        }
        case FamilyKind::Poisson: return std::exp(eta);
    }
    require(false, "unreachable family kind");
    return 0.0;
}

double GlmFamily::dispersion(double phi) const {
    return kind == FamilyKind::Linear ? phi : 1.0;
}

double GlmFamily::log_base(double y, double phi) const {
    switch (kind) {
        case FamilyKind::Linear: return -0.5 * std::log(kTwoPi * phi) - y * y / (2.0 * phi);
        case FamilyKind::Logistic: return 0.0;
        case FamilyKind::Poisson: return -std::lgamma(y + 1.0);
    }
    require(false, "unreachable family kind");
    return 0.0;
}

const char* GlmFamily::name() const {
    switch (kind) {
        case FamilyKind::Linear: return "linear";
        case FamilyKind::Logistic: return "logistic";
        case FamilyKind::Poisson: return "poisson";
    }
    return "?";
}

const char* GlmFamily::response_domain() const {
    switch (kind) {
        case FamilyKind::Linear: return "real line";
        case FamilyKind::Logistic: return "{0,1}";
        case FamilyKind::Poisson: return "nonnegative integers";
    }
    return "?";
}

GlmFamily make_family(FamilyKind kind) {
    GlmFamily fam;
    fam.kind = kind;
    fam.bounded_curvature = kind != FamilyKind::Poisson;
    return fam;
}

GlmFamily family_from_name(const std::string& name) {
    if (name == "linear") return make_family(FamilyKind::Linear);
    if (name == "logistic") return make_family(FamilyKind::Logistic);
    if (name == "poisson") return make_family(FamilyKind::Poisson);
    throw Error("unknown family '" + name + "' (expected linear|logistic|poisson)");
}

namespace {

double parse_field(const std::string& field, const std::string& where) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end || field.empty())
        throw Error("csv: bad numeric field '" + field + "' at " + where);
    if (!std::isfinite(out)) throw Error("csv: non-finite value at " + where);
    return out;
}

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: '" + path + "' is empty");

    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "y")
        throw Error("csv: first header column must be 'y' in '" + path + "'");
    const long d = static_cast<long>(header.size()) - 1;
    if (d < 1) throw Error("csv: need at least one feature column in '" + path + "'");
    for (long j = 0; j < d; ++j) {
        const std::string want = "x" + std::to_string(j + 1);
        if (header[static_cast<size_t>(j + 1)] != want)
            throw Error("csv: header column " + std::to_string(j + 1) + " must be '" + want +
                        "' in '" + path + "'");
    }

    std::vector<double> ys;
    std::vector<double> xs;
    long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<long>(fields.size()) != d + 1)
            throw Error("csv: row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(d + 1));
        const std::string where = "row " + std::to_string(row);
        ys.push_back(parse_field(fields[0], where));
        for (long j = 0; j < d; ++j)
            xs.push_back(parse_field(fields[static_cast<size_t>(j + 1)], where));
    }
    if (ys.empty()) throw Error("csv: '" + path + "' has no data rows");

    Dataset data;
    const long n = static_cast<long>(ys.size());
    data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
    data.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs.data(), n, d);
    return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
    require(data.x.rows() == data.y.size(), "csv: x rows and y length disagree");
    std::ofstream out(path);
    if (!out) throw Error("csv: cannot write '" + path + "'");
    out << "y";
    for (Eigen::Index j = 0; j < data.d(); ++j) out << ",x" << (j + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << format_double(data.y[i]);
        for (Eigen::Index j = 0; j < data.d(); ++j) out << "," << format_double(data.x(i, j));
        out << "\n";
    }
    if (!out) throw Error("csv: write to '" + path + "' failed");
}

void check_response(const GlmFamily& family, const Dataset& data) {
    require(data.x.rows() == data.y.size(), "dataset: x rows and y length disagree");
    require(data.x.allFinite() && data.y.allFinite(), "dataset: entries must be finite");
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double y = data.y[i];
        if (family.kind == FamilyKind::Logistic)
            require(y == 0.0 || y == 1.0, "dataset: logistic response must be 0 or 1");
        if (family.kind == FamilyKind::Poisson)
            require(y >= 0.0 && y == std::floor(y),
                    "dataset: poisson response must be a nonnegative integer");
    }
}

double loss(const GlmFamily& family, const Eigen::VectorXd& x_row, double y,
            const ModelParams& params) {
    require(x_row.size() == params.beta.size(), "loss: x_row and beta dimensions disagree");
    require(params.phi > 0.0, "loss: phi must be positive");
    const double eta = params.beta.dot(x_row);
    return -family.log_base(y, params.phi) +
           (family.psi(eta) - y * eta) / family.dispersion(params.phi);
}

double avg_neg_loglik(const GlmFamily& family, const Dataset& data, const ModelParams& params) {
    require(data.n() > 0, "avg_neg_loglik: empty dataset");
    require(data.x.cols() == params.beta.size(),
            "avg_neg_loglik: data and beta dimensions disagree");
    require(params.phi > 0.0, "avg_neg_loglik: phi must be positive");
    const Eigen::VectorXd eta = data.x * params.beta;
    const double a = family.dispersion(params.phi);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        acc += -family.log_base(data.y[i], params.phi) +
               (family.psi(eta[i]) - data.y[i] * eta[i]) / a;
    }
    return acc / static_cast<double>(data.n());
}

Eigen::VectorXd nll_gradient(const GlmFamily& family, const Dataset& data,
                             const ModelParams& params) {
    require(data.n() > 0, "nll_gradient: empty dataset");
    require(data.x.cols() == params.beta.size(), "nll_gradient: dimensions disagree");
    const Eigen::VectorXd eta = data.x * params.beta;
    Eigen::VectorXd resid(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) resid[i] = family.psi_dot(eta[i]) - data.y[i];
    return data.x.transpose() * resid /
           (static_cast<double>(data.n()) * family.dispersion(params.phi));
}

ModelParams fit_mle(const GlmFamily& family, const Dataset& data, const GdConfig& cfg) {
    require(data.n() > 0, "fit_mle: empty dataset");
    check_response(family, data);
    const Eigen::Index n = data.n();
    const Eigen::Index d = data.d();

    GdResult res;
    if (family.kind == FamilyKind::Linear) {
        const Eigen::MatrixXd gram = data.x.transpose() * data.x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (lo <= 1e-10 * std::max(hi, 1.0))
            throw Error("fit_mle: singular design (X'X not invertible)");
        // quadratic objective: solve the normal equations iteratively
        res = gd_minimize_quadratic(gram / static_cast<double>(n),
                                    data.x.transpose() * data.y / static_cast<double>(n), cfg);
    } else {
        // beta does not depend on phi, so minimize at unit dispersion.
        const auto objective = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& grad) {
            const Eigen::VectorXd eta = data.x * beta;
            double value = 0.0;
            Eigen::VectorXd resid(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                value += family.psi(eta[i]) - data.y[i] * eta[i];
                resid[i] = family.psi_dot(eta[i]) - data.y[i];
            }
            grad.noalias() = data.x.transpose() * resid / static_cast<double>(n);
            return value / static_cast<double>(n);
        };
        res = gd_minimize(objective, d, cfg);
    }
    if (!res.converged)
        throw SolveFailure("fit_mle: no convergence after " + std::to_string(res.iters) +
                               " iterations (grad inf-norm " + format_double(res.grad_inf) + ")",
                           res.x);

    ModelParams params;
    params.beta = res.x;
    params.phi = 1.0;
    if (family.kind == FamilyKind::Linear) {
        const double ssr = (data.y - data.x * params.beta).squaredNorm();
        params.phi = std::max(ssr / static_cast<double>(n), 1e-12);
    }
    return params;
}

}  // namespace drglm
