#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "magma/core/kernel.hpp"
#include "magma/data/cohort.hpp"

namespace magma {

struct SyntheticConfig {
    int n_individuals = 31;
    int min_observations = 1;
    int max_observations = 16;
    // The first `singleton_individuals` individuals get exactly one observation.
    int singleton_individuals = 0;
    double age_min = 5.0;
    double age_max = 25.0;
    KernelParams mean_process{900.0, 4.0};
    KernelParams individual{400.0, 3.0};
    NoiseParams noise{100.0};
    double prior_mean_constant = 250.0;
    // Points of the dense grid the latent mean is reported on.
    int truth_grid_size = 201;
    // When non-empty every individual is observed at exactly these ages.
    std::vector<double> fixed_ages;

    void validate() const;
};

struct TruthPoint {
    double age = 0.0;
    double true_mean = 0.0;
};

struct SyntheticCohort {
    Cohort cohort;
    // Latent mean process at the dense grid and every sampled age, ascending.
    std::vector<TruthPoint> truth;

    double true_mean_at(double age) const;
};

// Draws one latent mean trajectory, then per individual irregular ages,
// a deviation from GP(0, individual) and Gaussian noise.
SyntheticCohort synthesize_cohort(const SyntheticConfig& config, std::uint64_t seed);

std::string serialize_truth_csv(const std::vector<TruthPoint>& truth);

}  // namespace magma
