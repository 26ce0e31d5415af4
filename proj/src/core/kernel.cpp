#include "magma/core/kernel.hpp"

#include <cmath>
#include <string>

#include "magma/core/errors.hpp"

namespace magma {

namespace {

void require_positive_finite(double v, const char* what) {
    if (!std::isfinite(v) || !(v > 0.0)) {
        throw DomainError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
    }
}

void require_finite(std::span<const double> xs, const char* what) {
    for (double x : xs) {
        if (!std::isfinite(x)) throw DomainError(std::string("non-finite value in ") + what);
    }
}

}  // namespace

void KernelParams::validate() const {
    require_positive_finite(variance, "kernel variance");
    require_positive_finite(lengthscale, "kernel lengthscale");
}

void NoiseParams::validate() const { require_positive_finite(noise_variance, "noise variance"); }

double SquaredExponential::value(const KernelParams& p, double distance) {
    const double scaled = distance / p.lengthscale;
    return p.variance * std::exp(-0.5 * scaled * scaled);
}

std::array<double, 2> SquaredExponential::log_gradient(const KernelParams& p, double distance) {
    const double scaled = distance / p.lengthscale;
    const double k = p.variance * std::exp(-0.5 * scaled * scaled);
    return {k, k * scaled * scaled};
}

template <class Kernel>
Eigen::MatrixXd kernel_matrix(const KernelParams& params, std::span<const double> xs, std::span<const double> ys) {
    params.validate();
    require_finite(xs, "kernel inputs");
    require_finite(ys, "kernel inputs");
    Eigen::MatrixXd k(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
    for (std::size_t j = 0; j < ys.size(); ++j) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = Kernel::value(params, xs[i] - ys[j]);
        }
    }
    return k;
}

template <class Kernel>
std::array<Eigen::MatrixXd, Kernel::kNumParams> kernel_matrix_log_gradients(const KernelParams& params,
                                                                            std::span<const double> xs) {
    params.validate();
    require_finite(xs, "kernel inputs");
    const auto n = static_cast<Eigen::Index>(xs.size());
    std::array<Eigen::MatrixXd, Kernel::kNumParams> out;
    for (auto& m : out) m.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto g = Kernel::log_gradient(params, xs[i] - xs[j]);
            for (int p = 0; p < Kernel::kNumParams; ++p) out[p](i, j) = g[p];
        }
    }
    return out;
}

template Eigen::MatrixXd kernel_matrix<SquaredExponential>(const KernelParams&, std::span<const double>,
                                                           std::span<const double>);
template std::array<Eigen::MatrixXd, 2> kernel_matrix_log_gradients<SquaredExponential>(const KernelParams&,
                                                                                        std::span<const double>);

}  // namespace magma
