#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

namespace magma {

struct OptimizerOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-5;
    int max_perturbed_restarts = 3;
    // Largest coordinate change per iteration, in log-parameter units.
    double max_step = 5.0;
};

struct OptimizationResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Returns f(x) and writes df/dx into `gradient`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& gradient)>;

// Box-constrained BFGS ascent with a backtracking line search. The best point
// visited is returned, so the value is never below the value at the (clamped)
// start point. Converged when the projected gradient max-norm drops below the
// tolerance or the quasi-Newton step predicts a gain below 1e-9 |f|, the
// level at which objective noise dominates.
// A non-finite objective at the start triggers up to max_perturbed_restarts
// deterministic perturbations before NumericalError is thrown.
OptimizationResult maximize(const Objective& objective, const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, const OptimizerOptions& options = {});

}  // namespace magma
