#include "magma/train/objectives.hpp"

#include <cmath>
#include <numbers>

#include "magma/core/errors.hpp"
#include "magma/core/linalg.hpp"

namespace magma {

namespace {

struct DensityTerms {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::VectorXd precision_residual;
};

DensityTerms density_terms(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& residual,
                           const Eigen::MatrixXd* trace_term, std::span<const Eigen::MatrixXd> derivatives) {
    const Eigen::Index n = covariance.rows();
    const CholeskyFactor chol = safe_cholesky(covariance);
    const Eigen::MatrixXd inv = chol.inverse();
    DensityTerms out;
    out.precision_residual = inv * residual;
    out.value = -0.5 * residual.dot(out.precision_residual) - 0.5 * chol.log_determinant() -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    // W = a a^T - M^{-1} + M^{-1} B M^{-1}; d(value)/dp = 1/2 tr(W dM/dp)
    Eigen::MatrixXd w = out.precision_residual * out.precision_residual.transpose() - inv;
    if (trace_term != nullptr) {
        out.value -= 0.5 * inv.cwiseProduct(*trace_term).sum();
        w.noalias() += inv * (*trace_term) * inv;
    }
    const double level = chol.jitter_level();
    const double trace_w = w.trace();
    out.gradient.resize(static_cast<Eigen::Index>(derivatives.size()));
    for (std::size_t k = 0; k < derivatives.size(); ++k) {
        const auto& d = derivatives[k];
        double g = 0.5 * w.cwiseProduct(d).sum();
        if (level > 0.0) g += 0.5 * level * d.diagonal().mean() * trace_w;
        out.gradient(static_cast<Eigen::Index>(k)) = g;
    }
    return out;
}

void require_individual_shapes(std::span<const double> ages, const Eigen::VectorXd& values,
                               const Eigen::VectorXd& mean_at_ages, const Eigen::MatrixXd& cov_at_ages) {
    const auto n = static_cast<Eigen::Index>(ages.size());
    if (n == 0 || values.size() != n || mean_at_ages.size() != n || cov_at_ages.rows() != n ||
        cov_at_ages.cols() != n) {
        throw DomainError("individual objective: inconsistent dimensions");
    }
}

}  // namespace

ObjectiveValue expected_log_density(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& residual,
                                    const Eigen::MatrixXd* trace_term,
                                    std::span<const Eigen::MatrixXd> derivatives) {
    auto terms = density_terms(covariance, residual, trace_term, derivatives);
    return {terms.value, std::move(terms.gradient)};
}

MeanProcessPrior mean_process_prior(const KernelParams& params, std::span<const double> grid) {
    params.validate();
    const Eigen::MatrixXd correlation = kernel_matrix(KernelParams{1.0, params.lengthscale}, grid, grid);
    const double level = safe_cholesky(correlation).jitter_level();
    MeanProcessPrior prior;
    prior.covariance = kernel_matrix(params, grid, grid);
    prior.jitter_level = level;
    prior.nugget = params.variance * level;
    prior.covariance.diagonal().array() += prior.nugget;
    return prior;
}

ObjectiveValue mean_process_objective(const HyperPosterior& hp, const KernelParams& params, double prior_mean) {
    hp.validate();
    const MeanProcessPrior prior = mean_process_prior(params, hp.grid);
    const Eigen::VectorXd residual = hp.mean.array() - prior_mean;
    // The nugget scales with the variance, so dK/dlog(variance) = K.
    const std::array<Eigen::MatrixXd, 2> derivs = {prior.covariance,
                                                   kernel_matrix_log_gradients(params, hp.grid)[1]};
    auto terms = density_terms(prior.covariance, residual, &hp.covariance, derivs);
    ObjectiveValue out;
    out.value = terms.value;
    out.gradient.resize(3);
    out.gradient.head<2>() = terms.gradient;
    out.gradient(2) = terms.precision_residual.sum();
    return out;
}

ProfiledMeanProcess profiled_mean_process_objective(const HyperPosterior& hp, double log_lengthscale) {
    const double lengthscale = std::exp(log_lengthscale);
    const KernelParams unit{1.0, lengthscale};
    const Eigen::MatrixXd correlation = kernel_matrix(unit, hp.grid, hp.grid);
    const CholeskyFactor chol = safe_cholesky(correlation);
    const Eigen::MatrixXd inv = chol.inverse();
    const auto g = static_cast<double>(hp.grid.size());

    const Eigen::VectorXd inv_ones = inv.rowwise().sum();
    const double prior_mean = inv_ones.dot(hp.mean) / inv_ones.sum();
    const Eigen::VectorXd residual = hp.mean.array() - prior_mean;
    Eigen::MatrixXd scatter = hp.covariance;
    scatter.noalias() += residual * residual.transpose();

    const double quad = inv.cwiseProduct(scatter).sum();
    const double variance = std::clamp(quad / g, kMinVariance, kMaxVariance);

    ProfiledMeanProcess out;
    out.variance = variance;
    out.prior_mean = prior_mean;
    out.objective.value = -0.5 * (quad / variance + g * std::log(variance) + chol.log_determinant() +
                                  g * std::log(2.0 * std::numbers::pi));
    // K = variance * (C + jitter I); the jitter does not depend on the lengthscale.
    const Eigen::MatrixXd d_corr = kernel_matrix_log_gradients(unit, hp.grid)[1];
    const Eigen::MatrixXd w = inv * scatter * inv / variance - inv;
    out.objective.gradient = Eigen::VectorXd::Constant(1, 0.5 * w.cwiseProduct(d_corr).sum());
    return out;
}

ObjectiveValue individual_objective(std::span<const double> ages, const Eigen::VectorXd& values,
                                    const Eigen::VectorXd& mean_at_ages, const Eigen::MatrixXd& cov_at_ages,
                                    const IndividualParams& params) {
    require_individual_shapes(ages, values, mean_at_ages, cov_at_ages);
    params.noise.validate();
    const auto n = static_cast<Eigen::Index>(ages.size());
    Eigen::MatrixXd psi = kernel_matrix(params.kernel, ages, ages);
    psi.diagonal().array() += params.noise.noise_variance;
    auto grads = kernel_matrix_log_gradients(params.kernel, ages);
    const std::array<Eigen::MatrixXd, 3> derivs = {
        std::move(grads[0]), std::move(grads[1]),
        Eigen::MatrixXd(params.noise.noise_variance * Eigen::MatrixXd::Identity(n, n))};
    return expected_log_density(psi, values - mean_at_ages, &cov_at_ages, derivs);
}

ObjectiveValue new_individual_objective(std::span<const double> ages, const Eigen::VectorXd& values,
                                        const Eigen::VectorXd& mean_at_ages, const Eigen::MatrixXd& cov_at_ages,
                                        const IndividualParams& params) {
    require_individual_shapes(ages, values, mean_at_ages, cov_at_ages);
    params.noise.validate();
    const auto n = static_cast<Eigen::Index>(ages.size());
    Eigen::MatrixXd cov = cov_at_ages + kernel_matrix(params.kernel, ages, ages);
    cov.diagonal().array() += params.noise.noise_variance;
    auto grads = kernel_matrix_log_gradients(params.kernel, ages);
    const std::array<Eigen::MatrixXd, 3> derivs = {
        std::move(grads[0]), std::move(grads[1]),
        Eigen::MatrixXd(params.noise.noise_variance * Eigen::MatrixXd::Identity(n, n))};
    return expected_log_density(symmetrize(cov), values - mean_at_ages, nullptr, derivs);
}

Eigen::VectorXd to_log_vector(const IndividualParams& p) {
    return Eigen::Vector3d(std::log(p.kernel.variance), std::log(p.kernel.lengthscale),
                           std::log(p.noise.noise_variance));
}

IndividualParams from_log_vector(const Eigen::VectorXd& x) {
    return IndividualParams{KernelParams{std::exp(x(0)), std::exp(x(1))}, NoiseParams{std::exp(x(2))}};
}

Eigen::VectorXd individual_lower_bounds() {
    return Eigen::Vector3d(std::log(kMinVariance), std::log(kMinLengthscale), std::log(kMinVariance));
}

Eigen::VectorXd individual_upper_bounds() {
    return Eigen::Vector3d(std::log(kMaxVariance), std::log(kMaxLengthscale), std::log(kMaxVariance));
}

}  // namespace magma
