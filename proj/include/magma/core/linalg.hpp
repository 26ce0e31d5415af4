#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

#include "magma/core/kernel.hpp"

namespace magma {

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kReconstructionTolerance = 1e-5;

// Relative jitter levels tried in order; each is scaled by mean(diag(m)).
inline constexpr std::array<double, 5> kJitterSchedule = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

// Lower Cholesky factor of m + jitter * I.
class CholeskyFactor {
public:
    CholeskyFactor(Eigen::MatrixXd lower, double jitter, double jitter_level);

    const Eigen::MatrixXd& lower() const { return lower_; }
    // Absolute diagonal jitter that was added.
    double jitter() const { return jitter_; }
    // Entry of kJitterSchedule that succeeded.
    double jitter_level() const { return jitter_level_; }
    Eigen::Index dimension() const { return lower_.rows(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
    // L^{-1} b
    Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& b) const;
    Eigen::MatrixXd inverse() const;
    double log_determinant() const;

private:
    Eigen::MatrixXd lower_;
    double jitter_;
    double jitter_level_;
};

// Factorizes a symmetric matrix with the smallest jitter from kJitterSchedule
// that succeeds. Throws DomainError for asymmetric or non-finite input and
// NonPsdError when the largest jitter still fails.
CholeskyFactor safe_cholesky(const Eigen::MatrixXd& m, double symmetry_tolerance = kSymmetryTolerance);

// Multivariate normal belief. Immutable once constructed.
class GaussianDist {
public:
    GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    Eigen::Index dimension() const { return mean_.size(); }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
};

double mvn_logpdf(const Eigen::VectorXd& y, const GaussianDist& dist);

// Conditions the joint belief on noisy observations of the entries listed in
// `observed`, returning the belief over the entries listed in `targets`.
GaussianDist gp_condition(const GaussianDist& joint, std::span<const Eigen::Index> targets,
                          std::span<const Eigen::Index> observed, const Eigen::VectorXd& observed_values,
                          const NoiseParams& noise);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

}  // namespace magma
