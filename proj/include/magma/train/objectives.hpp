#pragma once

#include <span>

#include <Eigen/Dense>

#include "magma/core/kernel.hpp"
#include "magma/train/model.hpp"

namespace magma {

// Log-parameter boxes shared by every hyperparameter optimization.
inline constexpr double kMinVariance = 1e-6;
inline constexpr double kMaxVariance = 1e12;
inline constexpr double kMinLengthscale = 1e-3;
inline constexpr double kMaxLengthscale = 1e4;

struct ObjectiveValue {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

// log N(residual; 0, M) - 1/2 tr(M^{-1} B) and its derivatives along each
// entry of `derivatives` (dM/dp). M is factored by safe_cholesky; when jitter
// is needed the derivative of the jitter term is included. `trace_term` may be
// null for B = 0.
ObjectiveValue expected_log_density(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& residual,
                                    const Eigen::MatrixXd* trace_term,
                                    std::span<const Eigen::MatrixXd> derivatives);

// Mean-process prior covariance on a grid: k(grid, grid) + nugget I, where the
// nugget is variance times the jitter level safe_cholesky needs for the
// unit-variance correlation matrix.
struct MeanProcessPrior {
    Eigen::MatrixXd covariance;
    double nugget = 0.0;
    double jitter_level = 0.0;
};

MeanProcessPrior mean_process_prior(const KernelParams& params, std::span<const double> grid);

// Expected complete-data log-density of the mean process:
//   log N(m_hat; m0 1, K0) - 1/2 tr(K0^{-1} K_hat)
// Gradient order: (log variance, log lengthscale, prior mean).
ObjectiveValue mean_process_objective(const HyperPosterior& hp, const KernelParams& params, double prior_mean);

// The same objective with the prior mean and variance replaced by their
// closed-form maximizers for the given lengthscale. Gradient is with respect
// to log lengthscale only.
struct ProfiledMeanProcess {
    ObjectiveValue objective;
    double variance = 0.0;
    double prior_mean = 0.0;
};
ProfiledMeanProcess profiled_mean_process_objective(const HyperPosterior& hp, double log_lengthscale);

// Expected complete-data log-density of one individual given the hyper-
// posterior restricted to its ages:
//   log N(y; m_hat(t), Psi) - 1/2 tr(Psi^{-1} K_hat(t, t)),  Psi = k(t, t) + s2 I
// Gradient order: (log variance, log lengthscale, log noise variance).
ObjectiveValue individual_objective(std::span<const double> ages, const Eigen::VectorXd& values,
                                    const Eigen::VectorXd& mean_at_ages, const Eigen::MatrixXd& cov_at_ages,
                                    const IndividualParams& params);

// Marginal log-likelihood of a new individual:
//   log N(y; m_hat(t), K_hat(t, t) + k(t, t) + s2 I)
// Same gradient order as individual_objective.
ObjectiveValue new_individual_objective(std::span<const double> ages, const Eigen::VectorXd& values,
                                        const Eigen::VectorXd& mean_at_ages, const Eigen::MatrixXd& cov_at_ages,
                                        const IndividualParams& params);

Eigen::VectorXd to_log_vector(const IndividualParams& p);
IndividualParams from_log_vector(const Eigen::VectorXd& x);
Eigen::VectorXd individual_lower_bounds();
Eigen::VectorXd individual_upper_bounds();

}  // namespace magma
