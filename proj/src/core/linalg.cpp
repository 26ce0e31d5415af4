#include "magma/core/linalg.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "magma/core/errors.hpp"

namespace magma {

namespace {

std::string describe_non_psd(long dimension, const std::vector<double>& jitters) {
    std::ostringstream os;
    os << "matrix of dimension " << dimension << " is not positive semi-definite; attempted jitters:";
    for (double j : jitters) os << ' ' << j;
    return os.str();
}

}  // namespace

NonPsdError::NonPsdError(long dimension, std::vector<double> attempted_jitters)
    : NumericalError(describe_non_psd(dimension, attempted_jitters)),
      dimension_(dimension),
      attempted_jitters_(std::move(attempted_jitters)) {}

CholeskyFactor::CholeskyFactor(Eigen::MatrixXd lower, double jitter, double jitter_level)
    : lower_(std::move(lower)), jitter_(jitter), jitter_level_(jitter_level) {}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = lower_.triangularView<Eigen::Lower>().solve(b);
    lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd x = lower_.triangularView<Eigen::Lower>().solve(b);
    lower_.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

Eigen::MatrixXd CholeskyFactor::solve_lower(const Eigen::MatrixXd& b) const {
    return lower_.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd CholeskyFactor::inverse() const {
    const Eigen::Index n = dimension();
    Eigen::MatrixXd linv = lower_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
    inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
    return inv.selfadjointView<Eigen::Lower>();
}

double CholeskyFactor::log_determinant() const { return 2.0 * lower_.diagonal().array().log().sum(); }

CholeskyFactor safe_cholesky(const Eigen::MatrixXd& m, double symmetry_tolerance) {
    if (m.rows() != m.cols()) throw DomainError("safe_cholesky: matrix is not square");
    if (!m.allFinite()) throw DomainError("safe_cholesky: matrix has non-finite entries");
    const Eigen::Index n = m.rows();
    if (n == 0) return CholeskyFactor(Eigen::MatrixXd(0, 0), 0.0, 0.0);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > symmetry_tolerance) {
        throw DomainError("safe_cholesky: matrix is not symmetric within tolerance");
    }
    const double scale = m.diagonal().mean();
    std::vector<double> attempted;
    for (double level : kJitterSchedule) {
        const double jitter = level * scale;
        if (level > 0.0 && !(jitter > 0.0)) continue;
        attempted.push_back(jitter);
        Eigen::MatrixXd work = m;
        work.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd lower = llt.matrixL();
            if (lower.diagonal().minCoeff() > 0.0 && lower.allFinite()) {
                return CholeskyFactor(std::move(lower), jitter, level);
            }
        }
    }
    throw NonPsdError(static_cast<long>(n), std::move(attempted));
}

GaussianDist::GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    if (covariance_.rows() != covariance_.cols() || covariance_.rows() != mean_.size()) {
        throw DomainError("GaussianDist: mean length must equal covariance dimension");
    }
    if (!mean_.allFinite() || !covariance_.allFinite()) throw DomainError("GaussianDist: non-finite entries");
    if (covariance_.size() > 0 && (covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
        throw DomainError("GaussianDist: covariance is not symmetric");
    }
}

double mvn_logpdf(const Eigen::VectorXd& y, const GaussianDist& dist) {
    if (y.size() != dist.dimension()) throw DomainError("mvn_logpdf: dimension mismatch");
    const CholeskyFactor chol = safe_cholesky(dist.covariance());
    const Eigen::VectorXd z = chol.solve_lower(y - dist.mean());
    const double n = static_cast<double>(y.size());
    return -0.5 * z.squaredNorm() - 0.5 * chol.log_determinant() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

GaussianDist gp_condition(const GaussianDist& joint, std::span<const Eigen::Index> targets,
                          std::span<const Eigen::Index> observed, const Eigen::VectorXd& observed_values,
                          const NoiseParams& noise) {
    noise.validate();
    if (observed.empty()) throw DomainError("gp_condition: no observed indices");
    if (static_cast<Eigen::Index>(observed.size()) != observed_values.size()) {
        throw DomainError("gp_condition: observed values do not match observed indices");
    }
    const Eigen::Index dim = joint.dimension();
    for (auto idx : targets) {
        if (idx < 0 || idx >= dim) throw DomainError("gp_condition: target index out of range");
    }
    for (auto idx : observed) {
        if (idx < 0 || idx >= dim) throw DomainError("gp_condition: observed index out of range");
    }
    const auto na = static_cast<Eigen::Index>(targets.size());
    const auto nb = static_cast<Eigen::Index>(observed.size());
    const auto& mu = joint.mean();
    const auto& cov = joint.covariance();

    Eigen::MatrixXd s_bb(nb, nb);
    Eigen::MatrixXd s_ba(nb, na);
    Eigen::MatrixXd s_aa(na, na);
    Eigen::VectorXd residual(nb);
    Eigen::VectorXd mean_a(na);
    for (Eigen::Index i = 0; i < nb; ++i) {
        residual(i) = observed_values(i) - mu(observed[i]);
        for (Eigen::Index j = 0; j < nb; ++j) s_bb(i, j) = cov(observed[i], observed[j]);
        for (Eigen::Index j = 0; j < na; ++j) s_ba(i, j) = cov(observed[i], targets[j]);
    }
    for (Eigen::Index i = 0; i < na; ++i) {
        mean_a(i) = mu(targets[i]);
        for (Eigen::Index j = 0; j < na; ++j) s_aa(i, j) = cov(targets[i], targets[j]);
    }
    s_bb.diagonal().array() += noise.noise_variance;

    const CholeskyFactor chol = safe_cholesky(s_bb);
    const Eigen::VectorXd weights = chol.solve(residual);
    const Eigen::MatrixXd v = chol.solve_lower(s_ba);
    Eigen::VectorXd post_mean = mean_a + s_ba.transpose() * weights;
    Eigen::MatrixXd post_cov = symmetrize(s_aa - v.transpose() * v);
    return GaussianDist(std::move(post_mean), std::move(post_cov));
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace magma
