#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

namespace magma {

// Hyperparameters of a stationary covariance function.
// variance is in squared output units, lengthscale in years.
struct KernelParams {
    double variance = 1.0;
    double lengthscale = 1.0;

    void validate() const;
    bool operator==(const KernelParams&) const = default;
};

struct NoiseParams {
    double noise_variance = 1.0;

    void validate() const;
    bool operator==(const NoiseParams&) const = default;
};

// Exponentiated quadratic: k(r) = variance * exp(-r^2 / (2 lengthscale^2)).
//
// A kernel family is any type with the same static interface; the matrix
// builders below are templated on it and default to this one.
struct SquaredExponential {
    static constexpr int kNumParams = 2;

    static double value(const KernelParams& p, double distance);

    // Derivatives with respect to (log variance, log lengthscale).
    static std::array<double, kNumParams> log_gradient(const KernelParams& p, double distance);
};

template <class Kernel = SquaredExponential>
Eigen::MatrixXd kernel_matrix(const KernelParams& params, std::span<const double> xs,
                              std::span<const double> ys);

// Derivative matrices of kernel_matrix(params, xs, xs) with respect to the
// log-transformed parameters, in the order (log variance, log lengthscale).
template <class Kernel = SquaredExponential>
std::array<Eigen::MatrixXd, Kernel::kNumParams> kernel_matrix_log_gradients(const KernelParams& params,
                                                                            std::span<const double> xs);

extern template Eigen::MatrixXd kernel_matrix<SquaredExponential>(const KernelParams&, std::span<const double>,
                                                                  std::span<const double>);
extern template std::array<Eigen::MatrixXd, 2> kernel_matrix_log_gradients<SquaredExponential>(
    const KernelParams&, std::span<const double>);

}  // namespace magma
