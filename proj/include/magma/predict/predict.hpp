#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "magma/core/linalg.hpp"
#include "magma/data/cohort.hpp"
#include "magma/train/model.hpp"
#include "magma/train/optimizer.hpp"

namespace magma {

// Two-sided 95% standard normal quantile, fixed to six decimals.
inline constexpr double kZ95 = 1.959964;
// Predictions may reach this many years beyond the training grid.
inline constexpr double kExtrapolationMargin = 5.0;

struct TrajectoryPrediction {
    std::vector<double> targets;
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    Eigen::VectorXd lower95;
    Eigen::VectorXd upper95;
};

// Latent: uncertainty of the underlying trajectory.
// Observation: additionally includes the measurement noise, i.e. the spread of
// a new measurement at the target age.
enum class PredictionScale { Latent, Observation };

std::pair<double, double> credible_interval(double mean, double variance, double level = 0.95);

// Mean-process belief at arbitrary ages. Grid ages are read from the stored
// hyper-posterior; other ages are obtained by conditioning the mean-process
// prior on it.
GaussianDist mean_process_at(const TrainedModel& model, std::span<const double> ages);

// Shared parameters in Common mode, otherwise the geometric mean of the
// training individuals' parameters.
IndividualParams baseline_individual_params(const TrainedModel& model);

// Maximizes the marginal likelihood of a new individual's observations over
// its kernel and noise parameters, starting from baseline_individual_params.
// Common-mode models return their shared parameters unchanged.
IndividualParams fit_new_individual_hps(const TrainedModel& model, std::span<const Observation> obs,
                                        const OptimizerOptions& options = {});

// Trajectory of an individual not used in training. With no observations the
// result is the population prior m_hat(targets), diag(K_hat + K_theta).
TrajectoryPrediction predict_trajectory(const TrainedModel& model, std::span<const Observation> obs,
                                        std::span<const double> targets, const IndividualParams& params,
                                        PredictionScale scale = PredictionScale::Latent);

// As above with parameters from fit_new_individual_hps (or the baseline when
// obs is empty).
TrajectoryPrediction predict_trajectory(const TrainedModel& model, std::span<const Observation> obs,
                                        std::span<const double> targets,
                                        PredictionScale scale = PredictionScale::Latent);

// Posterior trajectory of a training individual. The hyper-posterior already
// contains this individual's data, so its observations enter only through the
// individual-specific process.
TrajectoryPrediction predict_training_individual(const TrainedModel& model, const std::string& id,
                                                 std::span<const Observation> obs, std::span<const double> targets,
                                                 PredictionScale scale = PredictionScale::Latent);

// Mean-process hyper-posterior with its credible band.
TrajectoryPrediction population_curve(const TrainedModel& model, std::span<const double> targets);

}  // namespace magma
