#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magma/data/cohort.hpp"
#include "magma/train/model.hpp"
#include "magma/train/optimizer.hpp"

namespace magma {

// Observed ages of every individual plus `extra_resolution` equally spaced
// points over [min_age, max_age], sorted and deduplicated within 1e-9 years.
std::vector<double> working_grid(std::span<const Individual> individuals, int extra_resolution);

struct EStepResult {
    HyperPosterior hyper_posterior;
    // Joint observed-data log-likelihood log N(y; m0, P K0 P^T + Psi).
    double log_likelihood = 0.0;
    double mean_process_nugget = 0.0;
};

// Gaussian hyper-posterior of the mean process on `grid`. Every observed age
// must be a grid point (within 1e-9). The prior covariance carries the nugget
// from mean_process_prior unless `nugget` is given.
EStepResult e_step_detailed(std::span<const Individual> individuals, const ModelParams& params,
                            std::span<const double> grid, std::optional<double> nugget = std::nullopt);

HyperPosterior e_step(std::span<const Individual> individuals, const ModelParams& params,
                      std::span<const double> grid);

// Joint observed-data log-likelihood of the cohort under `params`.
double observed_log_likelihood(std::span<const Individual> individuals, const ModelParams& params);

// Mean-process hyper-posterior restricted to an individual's ages.
struct LocalBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};
LocalBelief restrict_to_ages(const HyperPosterior& hp, std::span<const double> ages);

ModelParams m_step(std::span<const Individual> individuals, const HyperPosterior& hp, const ModelParams& current,
                   const OptimizerOptions& options = {});

struct EmConfig {
    int max_iterations = 100;
    double rel_tol = 1e-4;
    // Extra uniform points in the grid the final hyper-posterior is stored on.
    int grid_extra_resolution = 0;
    OptimizerOptions optimizer;
};

// Alternates e_step and m_step on the observed-age grid until the relative
// change of the log-likelihood drops below rel_tol or max_iterations is hit.
TrainedModel em_train(const Cohort& cohort, const ModelParams& init, const EmConfig& config = {});

// Random initialization used by train_with_restarts for restart `index`.
ModelParams random_initialization(const Cohort& cohort, HpMode mode, std::uint64_t seed, int index);

// Runs em_train from `n_restarts` seeded initializations and keeps the one
// with the highest log-likelihood (ties go to the lowest restart index).
TrainedModel train_with_restarts(const Cohort& cohort, HpMode mode, int n_restarts, std::uint64_t seed,
                                 const EmConfig& config = {}, int max_threads = 0);

}  // namespace magma
