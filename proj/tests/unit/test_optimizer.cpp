#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "magma/core/errors.hpp"
#include "magma/train/optimizer.hpp"

namespace magma {
namespace {

Eigen::VectorXd box(double v, Eigen::Index n) { return Eigen::VectorXd::Constant(n, v); }

TEST(Maximize, ConcaveQuadratic) {
    Eigen::VectorXd target(3);
    target << 1.0, -2.0, 0.5;
    Eigen::MatrixXd a(3, 3);
    a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const Eigen::VectorXd d = x - target;
        g = -a * d;
        return -0.5 * d.dot(a * d);
    };
    const auto r = maximize(f, Eigen::VectorXd::Zero(3), box(-10, 3), box(10, 3));
    EXPECT_TRUE(r.converged);
    EXPECT_LT((r.x - target).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Maximize, Rosenbrock) {
    const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const double a = 1 - x(0);
        const double b = x(1) - x(0) * x(0);
        g.resize(2);
        g(0) = 2 * a + 400 * x(0) * b;
        g(1) = -200 * b;
        return -(a * a + 100 * b * b);
    };
    Eigen::VectorXd start(2);
    start << -1.2, 1.0;
    OptimizerOptions opts;
    opts.max_iterations = 500;
    const auto r = maximize(f, start, box(-5, 2), box(5, 2), opts);
    EXPECT_NEAR(r.x(0), 1.0, 1e-4);
    EXPECT_NEAR(r.x(1), 1.0, 1e-4);
}

TEST(Maximize, RespectsBoxAndStopsAtActiveBound) {
    const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = Eigen::VectorXd::Constant(1, 1.0);
        return x(0);
    };
    const auto r = maximize(f, Eigen::VectorXd::Zero(1), box(-1, 1), box(2, 1));
    EXPECT_DOUBLE_EQ(r.x(0), 2.0);
    EXPECT_TRUE(r.converged);
}

TEST(Maximize, NeverReturnsBelowStart) {
    // Wiggly objective with many local optima.
    const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g.resize(2);
        g(0) = std::cos(3 * x(0)) * 3 - 0.2 * x(0);
        g(1) = -std::sin(2 * x(1)) * 2 - 0.2 * x(1);
        return std::sin(3 * x(0)) + std::cos(2 * x(1)) - 0.1 * x.squaredNorm();
    };
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXd s(2);
        s << -3 + 0.6 * i, 2 - 0.4 * i;
        Eigen::VectorXd g;
        const double f0 = f(s, g);
        const auto r = maximize(f, s, box(-4, 2), box(4, 2));
        EXPECT_GE(r.value, f0);
    }
}

TEST(Maximize, PerturbsAwayFromNonFiniteStart) {
    int calls = 0;
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        ++calls;
        g = -2 * x;
        if (calls == 1) return std::numeric_limits<double>::quiet_NaN();
        return -x.squaredNorm();
    };
    const auto r = maximize(f, Eigen::VectorXd::Constant(1, 0.5), box(-3, 1), box(3, 1));
    EXPECT_NEAR(r.x(0), 0.0, 1e-5);
}

TEST(Maximize, GivesUpAfterPerturbedRestarts) {
    int calls = 0;
    const Objective f = [&](const Eigen::VectorXd&, Eigen::VectorXd& g) -> double {
        ++calls;
        g = Eigen::VectorXd::Zero(1);
        throw NumericalError("always fails");
    };
    EXPECT_THROW(maximize(f, Eigen::VectorXd::Zero(1), box(-1, 1), box(1, 1)), NumericalError);
    EXPECT_EQ(calls, 4);
}

}  // namespace
}  // namespace magma
