#include "magma/predict/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "magma/core/errors.hpp"
#include "magma/train/objectives.hpp"

namespace magma {

namespace {

constexpr double kGridTolerance = 1e-9;

void check_range(const TrainedModel& model, std::span<const double> ages, const char* what) {
    const auto& grid = model.hyper_posterior.grid;
    const double lo = grid.front() - kExtrapolationMargin;
    const double hi = grid.back() + kExtrapolationMargin;
    for (double a : ages) {
        if (!std::isfinite(a)) throw DomainError(std::string("non-finite ") + what);
        if (a < lo || a > hi) {
            throw DomainError(std::string(what) + " " + std::to_string(a) + " outside the supported range [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }
}

void check_targets(const TrainedModel& model, std::span<const double> targets) {
    check_range(model, targets, "target age");
    if (!std::is_sorted(targets.begin(), targets.end())) throw DomainError("targets must be sorted ascending");
}

std::vector<double> ages_of(std::span<const Observation> obs) {
    std::vector<double> out;
    out.reserve(obs.size());
    for (const auto& o : obs) out.push_back(o.age);
    return out;
}

Eigen::VectorXd values_of(std::span<const Observation> obs) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) out(static_cast<Eigen::Index>(i)) = obs[i].value;
    return out;
}

TrajectoryPrediction finish(std::span<const double> targets, Eigen::VectorXd mean, Eigen::VectorXd variance) {
    TrajectoryPrediction p;
    p.targets.assign(targets.begin(), targets.end());
    p.variance = variance.cwiseMax(0.0);
    p.mean = std::move(mean);
    const auto n = p.mean.size();
    p.lower95.resize(n);
    p.upper95.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto [lo, hi] = credible_interval(p.mean(i), p.variance(i));
        p.lower95(i) = lo;
        p.upper95(i) = hi;
    }
    return p;
}

}  // namespace

std::pair<double, double> credible_interval(double mean, double variance, double level) {
    if (!(level > 0.0) || !(level < 1.0)) throw DomainError("credible level must lie in (0, 1)");
    if (!(variance >= 0.0)) throw DomainError("variance must be non-negative");
    double z = kZ95;
    if (level != 0.95) z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
    const double half = z * std::sqrt(variance);
    return {mean - half, mean + half};
}

GaussianDist mean_process_at(const TrainedModel& model, std::span<const double> ages) {
    const auto& hp = model.hyper_posterior;
    const auto& theta = model.params.mean_kernel;
    const double nugget = model.mean_process_nugget;
    const double m0 = model.params.prior_mean;
    const auto t = static_cast<Eigen::Index>(ages.size());
    const auto g = static_cast<Eigen::Index>(hp.grid.size());

    std::vector<std::optional<Eigen::Index>> on(ages.size());
    std::vector<double> snapped(ages.begin(), ages.end());
    std::vector<Eigen::Index> off;
    for (Eigen::Index i = 0; i < t; ++i) {
        on[static_cast<std::size_t>(i)] = hp.find(ages[static_cast<std::size_t>(i)], kGridTolerance);
        if (on[static_cast<std::size_t>(i)]) {
            snapped[static_cast<std::size_t>(i)] = hp.grid[static_cast<std::size_t>(*on[static_cast<std::size_t>(i)])];
        } else {
            off.push_back(i);
        }
    }

    Eigen::VectorXd mean(t);
    Eigen::MatrixXd cov(t, t);
    if (!off.empty()) {
        // A = K_gg^{-1} K_g,targets, with unit columns for grid ages.
        Eigen::MatrixXd k_gg = kernel_matrix(theta, hp.grid, hp.grid);
        k_gg.diagonal().array() += nugget;
        const CholeskyFactor chol = safe_cholesky(k_gg);
        std::vector<double> off_ages;
        for (auto i : off) off_ages.push_back(snapped[static_cast<std::size_t>(i)]);
        const Eigen::MatrixXd a_off = chol.solve(kernel_matrix(theta, hp.grid, off_ages));

        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g, t);
        for (Eigen::Index i = 0, k = 0; i < t; ++i) {
            if (on[static_cast<std::size_t>(i)]) {
                a(*on[static_cast<std::size_t>(i)], i) = 1.0;
            } else {
                a.col(i) = a_off.col(k++);
            }
        }
        Eigen::MatrixXd k_tt = kernel_matrix(theta, snapped, snapped);
        Eigen::MatrixXd k_tg = kernel_matrix(theta, snapped, hp.grid);
        for (Eigen::Index i = 0; i < t; ++i) {
            for (Eigen::Index j = 0; j < t; ++j) {
                if (snapped[static_cast<std::size_t>(i)] == snapped[static_cast<std::size_t>(j)]) k_tt(i, j) += nugget;
            }
            if (on[static_cast<std::size_t>(i)]) k_tg(i, *on[static_cast<std::size_t>(i)]) += nugget;
        }
        mean = (a.transpose() * (hp.mean.array() - m0).matrix()).array() + m0;
        cov = k_tt - k_tg * a + a.transpose() * hp.covariance * a;
    }
    for (Eigen::Index i = 0; i < t; ++i) {
        const auto& gi = on[static_cast<std::size_t>(i)];
        if (!gi) continue;
        mean(i) = hp.mean(*gi);
        for (Eigen::Index j = 0; j < t; ++j) {
            const auto& gj = on[static_cast<std::size_t>(j)];
            if (gj) cov(i, j) = hp.covariance(*gi, *gj);
        }
    }
    return GaussianDist(std::move(mean), symmetrize(cov));
}

IndividualParams baseline_individual_params(const TrainedModel& model) {
    const auto& p = model.params;
    if (p.mode == HpMode::Common) return p.shared;
    if (p.per_individual.empty()) throw DomainError("model has no individual parameters");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(3);
    for (const auto& [id, ip] : p.per_individual) acc += to_log_vector(ip);
    return from_log_vector(acc / static_cast<double>(p.per_individual.size()));
}

IndividualParams fit_new_individual_hps(const TrainedModel& model, std::span<const Observation> obs,
                                        const OptimizerOptions& options) {
    if (model.params.mode == HpMode::Common) return model.params.shared;
    if (obs.empty()) throw DomainError("fit_new_individual_hps needs at least one observation");
    const auto ages = ages_of(obs);
    check_range(model, ages, "observation age");
    const Eigen::VectorXd values = values_of(obs);
    const GaussianDist belief = mean_process_at(model, ages);
    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
        const auto o = new_individual_objective(ages, values, belief.mean(), belief.covariance(), from_log_vector(x));
        grad = o.gradient;
        return o.value;
    };
    const auto res = maximize(objective, to_log_vector(baseline_individual_params(model)), individual_lower_bounds(),
                              individual_upper_bounds(), options);
    return from_log_vector(res.x);
}

TrajectoryPrediction predict_trajectory(const TrainedModel& model, std::span<const Observation> obs,
                                        std::span<const double> targets, const IndividualParams& params,
                                        PredictionScale scale) {
    params.kernel.validate();
    params.noise.validate();
    check_targets(model, targets);
    const auto obs_ages = ages_of(obs);
    check_range(model, obs_ages, "observation age");

    const auto t = static_cast<Eigen::Index>(targets.size());
    const auto n = static_cast<Eigen::Index>(obs.size());
    std::vector<double> points(targets.begin(), targets.end());
    points.insert(points.end(), obs_ages.begin(), obs_ages.end());

    const GaussianDist belief = mean_process_at(model, points);
    const Eigen::MatrixXd gamma = symmetrize(belief.covariance() + kernel_matrix(params.kernel, points, points));

    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    if (n == 0) {
        mean = belief.mean();
        variance = gamma.diagonal();
    } else {
        std::vector<Eigen::Index> a(static_cast<std::size_t>(t));
        std::vector<Eigen::Index> b(static_cast<std::size_t>(n));
        std::iota(a.begin(), a.end(), 0);
        std::iota(b.begin(), b.end(), t);
        const GaussianDist post = gp_condition(GaussianDist(belief.mean(), gamma), a, b, values_of(obs), params.noise);
        mean = post.mean();
        variance = post.covariance().diagonal();
    }
    if (scale == PredictionScale::Observation) variance.array() += params.noise.noise_variance;
    return finish(targets, std::move(mean), std::move(variance));
}

TrajectoryPrediction predict_trajectory(const TrainedModel& model, std::span<const Observation> obs,
                                        std::span<const double> targets, PredictionScale scale) {
    const IndividualParams params =
        obs.empty() ? baseline_individual_params(model) : fit_new_individual_hps(model, obs);
    return predict_trajectory(model, obs, targets, params, scale);
}

TrajectoryPrediction predict_training_individual(const TrainedModel& model, const std::string& id,
                                                 std::span<const Observation> obs, std::span<const double> targets,
                                                 PredictionScale scale) {
    const auto& params = model.params.for_individual(id);
    check_targets(model, targets);
    const auto obs_ages = ages_of(obs);
    check_range(model, obs_ages, "observation age");

    const auto t = static_cast<Eigen::Index>(targets.size());
    const auto n = static_cast<Eigen::Index>(obs.size());
    std::vector<double> points(targets.begin(), targets.end());
    points.insert(points.end(), obs_ages.begin(), obs_ages.end());
    const GaussianDist belief = mean_process_at(model, points);

    Eigen::MatrixXd k_tt = kernel_matrix(params.kernel, targets, targets);
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    if (n == 0) {
        mean = belief.mean();
        cov = belief.covariance() + k_tt;
    } else {
        // f_i(T) | mu, y ~ N(K_Tt Psi^{-1} (y - mu(t)), K_TT - K_Tt Psi^{-1} K_tT)
        Eigen::MatrixXd psi = kernel_matrix(params.kernel, obs_ages, obs_ages);
        psi.diagonal().array() += params.noise.noise_variance;
        const CholeskyFactor chol = safe_cholesky(psi);
        const Eigen::MatrixXd k_ot = kernel_matrix(params.kernel, obs_ages, targets);
        const Eigen::MatrixXd b = chol.solve(k_ot);

        Eigen::MatrixXd l(t, t + n);
        l.leftCols(t).setIdentity();
        l.rightCols(n) = -b.transpose();
        mean = l * belief.mean() + b.transpose() * values_of(obs);
        cov = l * belief.covariance() * l.transpose() + k_tt - k_ot.transpose() * b;
    }
    Eigen::VectorXd variance = cov.diagonal();
    if (scale == PredictionScale::Observation) variance.array() += params.noise.noise_variance;
    return finish(targets, std::move(mean), std::move(variance));
}

TrajectoryPrediction population_curve(const TrainedModel& model, std::span<const double> targets) {
    check_targets(model, targets);
    const GaussianDist belief = mean_process_at(model, targets);
    return finish(targets, belief.mean(), belief.covariance().diagonal());
}

}  // namespace magma
