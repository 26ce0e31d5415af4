#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "magma/core/errors.hpp"
#include "magma/core/random.hpp"
#include "magma/predict/predict.hpp"
#include "magma/train/em.hpp"
#include "magma/train/objectives.hpp"
#include "oracles.hpp"

namespace magma {
namespace {

struct Fixture {
    std::vector<Individual> individuals;
    TrainedModel model;
};

// Model whose hyper-posterior is the exact E-step on a well-spaced grid.
Fixture make_fixture(std::uint64_t seed, HpMode mode = HpMode::Common) {
    Rng rng(seed);
    Fixture f;
    for (int i = 0; i < 3; ++i) {
        std::vector<Observation> obs;
        for (int k = 0; k < 4; ++k) obs.push_back({6.0 + 3.0 * k + rng.uniform(0.0, 1.5), rng.uniform(180.0, 320.0)});
        f.individuals.emplace_back("p" + std::to_string(i), std::move(obs));
    }
    auto& p = f.model.params;
    p.mode = mode;
    p.mean_kernel = {rng.uniform(300.0, 1200.0), rng.uniform(2.0, 4.0)};
    p.prior_mean = 250.0;
    p.shared = {{rng.uniform(100.0, 400.0), rng.uniform(1.5, 3.0)}, {rng.uniform(20.0, 80.0)}};
    if (mode == HpMode::IndividualSpecific) {
        for (const auto& ind : f.individuals) {
            p.per_individual[ind.id()] = {{rng.uniform(100.0, 400.0), rng.uniform(1.5, 3.0)}, {rng.uniform(20.0, 80.0)}};
        }
    }
    const auto grid = working_grid(f.individuals, 0);
    const auto e = e_step_detailed(f.individuals, p, grid);
    f.model.hyper_posterior = e.hyper_posterior;
    f.model.mean_process_nugget = e.mean_process_nugget;
    f.model.log_likelihood = e.log_likelihood;
    return f;
}

TEST(CredibleInterval, Examples) {
    auto [lo, hi] = credible_interval(0.0, 1.0);
    EXPECT_DOUBLE_EQ(lo, -1.959964);
    EXPECT_DOUBLE_EQ(hi, 1.959964);
    std::tie(lo, hi) = credible_interval(5.0, 0.0);
    EXPECT_EQ(lo, 5.0);
    EXPECT_EQ(hi, 5.0);
    std::tie(lo, hi) = credible_interval(100.0, 4.0);
    EXPECT_NEAR(lo, 96.080072, 1e-9);
    EXPECT_NEAR(hi, 103.919928, 1e-9);
    std::tie(lo, hi) = credible_interval(0.0, 1.0, 0.9);
    EXPECT_NEAR(hi, 1.6448536269514722, 1e-12);
}

TEST(CredibleInterval, RejectsInvalidInput) {
    EXPECT_THROW(credible_interval(0.0, 1.0, 0.0), DomainError);
    EXPECT_THROW(credible_interval(0.0, 1.0, 1.0), DomainError);
    EXPECT_THROW(credible_interval(0.0, -1.0), DomainError);
}

TEST(MeanProcessAt, OffGridAgesMatchExpandedOracle) {
    const auto f = make_fixture(1);
    ASSERT_EQ(f.model.mean_process_nugget, 0.0);
    const std::vector<double> ages{f.model.hyper_posterior.grid[1], 8.3, 12.0, f.model.hyper_posterior.grid.back() + 2.0};
    const auto belief = mean_process_at(f.model, ages);
    const auto oracle = testing::e_step_oracle(f.individuals, f.model.params, ages);
    EXPECT_LT((belief.mean() - oracle.mean).cwiseAbs().maxCoeff(), 1e-8);
    // Off-grid entries go through K_gg^{-1}, which costs a few digits on close grids.
    const Eigen::VectorXd cov = belief.covariance().reshaped();
    EXPECT_LT(testing::max_relative_error(cov, oracle.cov.reshaped()), 1e-6);
}

TEST(PredictTrajectory, EmptyObservationsGivePopulationPrior) {
    const auto f = make_fixture(2);
    const std::vector<double> targets{6.0, 9.5, 13.0, 17.25};
    const auto params = baseline_individual_params(f.model);
    const auto pred = predict_trajectory(f.model, {}, targets, params);
    const auto belief = mean_process_at(f.model, targets);
    EXPECT_TRUE(pred.mean == belief.mean());
    const Eigen::VectorXd expected_var =
        (belief.covariance() + kernel_matrix(params.kernel, targets, targets)).diagonal();
    EXPECT_LT((pred.variance - expected_var).cwiseAbs().maxCoeff(), 1e-9);
    const auto curve = population_curve(f.model, targets);
    EXPECT_TRUE(curve.mean == belief.mean());
    EXPECT_LT((curve.variance - belief.covariance().diagonal()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PredictTrajectory, NearNoiselessObservationIsInterpolated) {
    const auto f = make_fixture(3);
    const std::vector<Observation> obs{{10.0, 275.0}};
    const std::vector<double> targets{8.0, 10.0, 12.0};
    IndividualParams p = f.model.params.shared;
    p.noise.noise_variance = 1e-10;
    const auto pred = predict_trajectory(f.model, obs, targets, p);
    EXPECT_NEAR(pred.mean(1), 275.0, 1e-4);
}

TEST(PredictTrajectory, MatchesBruteForceConditioningOnGrid) {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const auto f = make_fixture(seed);
        const auto& hp = f.model.hyper_posterior;
        // Two targets and three observations, all on the grid.
        const std::vector<std::size_t> target_idx{1, 6};
        const std::vector<std::size_t> obs_idx{0, 3, 9};
        std::vector<double> targets;
        std::vector<Observation> obs;
        Rng rng(seed);
        for (auto i : target_idx) targets.push_back(hp.grid[i]);
        for (auto i : obs_idx) obs.push_back({hp.grid[i], rng.uniform(150.0, 350.0)});
        const IndividualParams p{{250.0, 2.0}, {30.0}};
        const auto pred = predict_trajectory(f.model, obs, targets, p);

        std::vector<std::size_t> all = target_idx;
        all.insert(all.end(), obs_idx.begin(), obs_idx.end());
        std::vector<double> ages;
        for (auto i : all) ages.push_back(hp.grid[i]);
        Eigen::VectorXd mean(5);
        Eigen::MatrixXd cov(5, 5);
        for (int a = 0; a < 5; ++a) {
            mean(a) = hp.mean(static_cast<Eigen::Index>(all[a]));
            for (int b = 0; b < 5; ++b) {
                cov(a, b) = hp.covariance(static_cast<Eigen::Index>(all[a]), static_cast<Eigen::Index>(all[b]));
            }
        }
        cov += testing::se_kernel(250.0, 2.0, ages, ages);
        Eigen::VectorXd y(3);
        for (int k = 0; k < 3; ++k) y(k) = obs[static_cast<std::size_t>(k)].value;
        const auto oracle = testing::condition_explicit(mean, cov, 2, y, 30.0);
        EXPECT_LT((pred.mean - oracle.mean).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((pred.variance - oracle.cov.diagonal()).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(PredictTrajectory, ConditioningReducesVariance) {
    const auto f = make_fixture(4);
    const std::vector<double> targets{7.0, 9.0, 11.0, 13.0, 15.0, 17.0};
    const IndividualParams p = f.model.params.shared;
    const auto prior = predict_trajectory(f.model, {}, targets, p);
    std::vector<Observation> obs;
    auto previous = prior;
    for (double age : {9.0, 15.0, 12.5}) {
        obs.push_back({age, 260.0});
        std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.age < b.age; });
        const auto pred = predict_trajectory(f.model, obs, targets, p);
        for (Eigen::Index i = 0; i < pred.variance.size(); ++i) {
            EXPECT_LE(pred.variance(i), previous.variance(i) + 1e-10);
        }
        previous = pred;
    }
    EXPECT_LE(previous.variance(1), prior.variance(1) + 1e-10);
}

TEST(PredictTrajectory, IntervalIsSymmetricConstruction) {
    const auto f = make_fixture(5);
    const std::vector<double> targets{7.0, 12.0, 16.0};
    const std::vector<Observation> obs{{8.0, 240.0}, {14.0, 300.0}};
    const auto pred = predict_trajectory(f.model, obs, targets, f.model.params.shared);
    for (Eigen::Index i = 0; i < pred.mean.size(); ++i) {
        const double half = kZ95 * std::sqrt(pred.variance(i));
        EXPECT_EQ(pred.lower95(i), pred.mean(i) - half);
        EXPECT_EQ(pred.upper95(i), pred.mean(i) + half);
        EXPECT_LE(pred.lower95(i), pred.mean(i));
        EXPECT_GE(pred.variance(i), 0.0);
    }
}

TEST(PredictTrajectory, ObservationScaleAddsNoise) {
    const auto f = make_fixture(6);
    const std::vector<double> targets{9.0, 11.0};
    const std::vector<Observation> obs{{10.0, 250.0}};
    const auto p = f.model.params.shared;
    const auto latent = predict_trajectory(f.model, obs, targets, p);
    const auto noisy = predict_trajectory(f.model, obs, targets, p, PredictionScale::Observation);
    EXPECT_TRUE(latent.mean == noisy.mean);
    for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(noisy.variance(i) - latent.variance(i), p.noise.noise_variance, 1e-9);
}

TEST(PredictTrajectory, ExtrapolationAndOrderingGuards) {
    const auto f = make_fixture(7);
    const auto& grid = f.model.hyper_posterior.grid;
    const std::vector<double> far{grid.back() + 5.5};
    const std::vector<double> edge{grid.front() - 4.9, grid.back() + 4.9};
    const std::vector<double> unsorted{10.0, 9.0};
    const auto p = f.model.params.shared;
    EXPECT_THROW(predict_trajectory(f.model, {}, far, p), DomainError);
    EXPECT_NO_THROW(predict_trajectory(f.model, {}, edge, p));
    EXPECT_THROW(predict_trajectory(f.model, {}, unsorted, p), DomainError);
    const std::vector<double> t{10.0};
    const std::vector<Observation> bad_obs{{1000.0 / 9.0, 1.0}};
    EXPECT_THROW(predict_trajectory(f.model, bad_obs, t, p), DomainError);
}

TEST(FitNewIndividualHps, CommonModeReusesSharedParameters) {
    const auto f = make_fixture(8);
    const std::vector<Observation> obs{{10.0, 250.0}, {12.0, 280.0}};
    EXPECT_EQ(fit_new_individual_hps(f.model, obs), f.model.params.shared);
}

TEST(FitNewIndividualHps, AscentFromBaseline) {
    for (std::uint64_t seed = 20; seed < 26; ++seed) {
        const auto f = make_fixture(seed, HpMode::IndividualSpecific);
        Rng rng(seed);
        std::vector<Observation> obs;
        for (int k = 0; k < 4; ++k) obs.push_back({7.0 + 2.5 * k, rng.uniform(150.0, 350.0)});
        std::vector<double> ages;
        Eigen::VectorXd y(4);
        for (int k = 0; k < 4; ++k) {
            ages.push_back(obs[static_cast<std::size_t>(k)].age);
            y(k) = obs[static_cast<std::size_t>(k)].value;
        }
        const auto belief = mean_process_at(f.model, ages);
        const auto fitted = fit_new_individual_hps(f.model, obs);
        const auto base = baseline_individual_params(f.model);
        EXPECT_GE(new_individual_objective(ages, y, belief.mean(), belief.covariance(), fitted).value,
                  new_individual_objective(ages, y, belief.mean(), belief.covariance(), base).value);
    }
}

TEST(FitNewIndividualHps, SinglePointOnMeanIsFinite) {
    const auto f = make_fixture(30, HpMode::IndividualSpecific);
    const double age = f.model.hyper_posterior.grid[2];
    const std::vector<Observation> obs{{age, f.model.hyper_posterior.mean(2)}};
    const auto fitted = fit_new_individual_hps(f.model, obs);
    EXPECT_TRUE(std::isfinite(fitted.noise.noise_variance));
    EXPECT_GE(fitted.noise.noise_variance, kMinVariance);
    EXPECT_THROW(fit_new_individual_hps(f.model, {}), DomainError);
}

TEST(BaselineIndividualParams, GeometricMeanOfTrainingParams) {
    TrainedModel m;
    m.params.mode = HpMode::IndividualSpecific;
    m.params.per_individual["a"] = {{1.0, 4.0}, {2.0}};
    m.params.per_individual["b"] = {{100.0, 1.0}, {8.0}};
    const auto b = baseline_individual_params(m);
    EXPECT_NEAR(b.kernel.variance, 10.0, 1e-12);
    EXPECT_NEAR(b.kernel.lengthscale, 2.0, 1e-12);
    EXPECT_NEAR(b.noise.noise_variance, 4.0, 1e-12);
}

TEST(PredictTrainingIndividual, SingleTaskReduction) {
    const Individual ind("solo", {{6.0, 220.0}, {8.5, 260.0}, {11.0, 300.0}, {14.0, 270.0}});
    const Cohort cohort({ind});
    ModelParams init;
    init.mode = HpMode::Common;
    init.mean_kernel = {500.0, 3.0};
    init.prior_mean = cohort.mean_value();
    init.shared = {{200.0, 2.0}, {25.0}};
    const auto model = em_train(cohort, init);
    const auto& p = model.params;
    const std::vector<double> targets{6.0, 7.0, 9.0, 12.5, 16.0};
    const auto pred = predict_training_individual(model, "solo", ind.observations(), targets);

    const auto ages = ind.ages();
    const auto sum_kernel = [&](std::span<const double> a, std::span<const double> b) {
        Eigen::MatrixXd k = testing::se_kernel(p.mean_kernel.variance, p.mean_kernel.lengthscale, a, b) +
                            testing::se_kernel(p.shared.kernel.variance, p.shared.kernel.lengthscale, a, b);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j)
                if (a[i] == b[j]) k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += model.mean_process_nugget;
        return k;
    };
    Eigen::MatrixXd kyy = sum_kernel(ages, ages);
    kyy.diagonal().array() += p.shared.noise.noise_variance;
    const Eigen::MatrixXd kty = sum_kernel(targets, ages);
    const auto vals = ind.values();
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(vals.data(), 4);
    const Eigen::MatrixXd inv = kyy.inverse();
    const Eigen::VectorXd mean = Eigen::VectorXd::Constant(5, p.prior_mean) + kty * inv * (y.array() - p.prior_mean).matrix();
    const Eigen::VectorXd var = (sum_kernel(targets, targets) - kty * inv * kty.transpose()).diagonal();
    EXPECT_LT((pred.mean - mean).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((pred.variance - var).cwiseAbs().maxCoeff(), 1e-6);
}

}  // namespace
}  // namespace magma
