#include "magma/train/optimizer.hpp"

#include <cmath>
#include <limits>

#include "magma/core/errors.hpp"
#include "magma/core/random.hpp"

namespace magma {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 30;
constexpr double kMinStep = 1e-12;
// Relative changes in f below this are treated as noise.
constexpr double kValueResolution = 1e-13;
// Stop once the quasi-Newton step predicts a relative gain below this.
constexpr double kGainTolerance = 1e-9;

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}

// Objective evaluation that maps numerical failures to NaN.
double safe_eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(x.size());
    try {
        const double v = f(x, g);
        if (!std::isfinite(v) || !g.allFinite()) return std::numeric_limits<double>::quiet_NaN();
        return v;
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::quiet_NaN();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

Eigen::VectorXd projected(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x(i) <= lo(i) && g(i) < 0.0) || (x(i) >= hi(i) && g(i) > 0.0)) pg(i) = 0.0;
    }
    return pg;
}

}  // namespace

OptimizationResult maximize(const Objective& objective, const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, const OptimizerOptions& options) {
    const Eigen::Index n = start.size();
    if (lower.size() != n || upper.size() != n) throw DomainError("maximize: bound dimensions do not match");

    Eigen::VectorXd x = clamp(start, lower, upper);
    Eigen::VectorXd g;
    double f = safe_eval(objective, x, g);
    for (int attempt = 0; !std::isfinite(f) && attempt < options.max_perturbed_restarts; ++attempt) {
        Rng rng(derive_seed(0, "optimizer-perturbation", static_cast<std::uint64_t>(attempt)));
        Eigen::VectorXd perturbed = start;
        for (Eigen::Index i = 0; i < n; ++i) perturbed(i) += rng.uniform(-1.0, 1.0);
        x = clamp(perturbed, lower, upper);
        f = safe_eval(objective, x, g);
    }
    if (!std::isfinite(f)) {
        throw NumericalError("optimizer: objective is non-finite at the start point and " +
                             std::to_string(options.max_perturbed_restarts) + " perturbed restarts");
    }

    OptimizationResult result;
    Eigen::VectorXd best_x = x;
    double best_f = f;
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool h_is_identity = true;
    Eigen::VectorXd gt;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        const Eigen::VectorXd pg = projected(x, g, lower, upper);
        if (n == 0 || pg.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd d = h * pg;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (pg(i) == 0.0) d(i) = 0.0;
        }
        if (!(d.dot(pg) > 0.0)) {
            h.setIdentity();
            h_is_identity = true;
            d = pg;
        }
        const double cap = h_is_identity ? 1.0 : options.max_step;
        const double largest = d.cwiseAbs().maxCoeff();
        if (largest > cap) d *= cap / largest;

        const double slope = g.dot(d);
        const double resolution = kValueResolution * std::max(1.0, std::abs(f));
        if (!h_is_identity && slope < kGainTolerance * std::max(1.0, std::abs(f))) {
            result.converged = true;
            break;
        }
        if (slope < resolution) {
            // The full step cannot change f measurably.
            result.converged = true;
            break;
        }

        bool accepted = false;
        Eigen::VectorXd xt;
        double ft = 0.0;
        double alpha = 1.0;
        for (int k = 0; k < kMaxBacktracks && alpha * d.cwiseAbs().maxCoeff() > kMinStep; ++k, alpha *= 0.5) {
            xt = clamp(x + alpha * d, lower, upper);
            if (xt == x) break;
            ft = safe_eval(objective, xt, gt);
            if (!std::isfinite(ft)) continue;
            const bool sufficient = ft >= f + kArmijo * g.dot(xt - x);
            // Values tied within rounding but the directional derivative shrank.
            const bool tied = ft >= f - resolution && std::abs(gt.dot(d)) <= 0.9 * std::abs(slope);
            if (sufficient || tied) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (h_is_identity) break;
            h.setIdentity();
            h_is_identity = true;
            continue;
        }

        // Inverse-Hessian update for the minimization of -f.
        const Eigen::VectorXd s = xt - x;
        const Eigen::VectorXd y = g - gt;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            if (h_is_identity) h *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            h = left * h * left.transpose() + rho * s * s.transpose();
            h_is_identity = false;
        }
        x = xt;
        f = ft;
        g = gt;
        result.iterations = iter + 1;
        if (f > best_f) {
            best_f = f;
            best_x = x;
        }
    }

    result.x = best_x;
    result.value = best_f;
    return result;
}

}  // namespace magma
