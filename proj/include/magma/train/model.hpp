#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "magma/core/kernel.hpp"
#include "magma/core/linalg.hpp"

namespace magma {

enum class HpMode { Common, IndividualSpecific };

std::string_view to_string(HpMode mode);
// Accepts "common" and "individual" (also "individual-specific").
HpMode parse_hp_mode(std::string_view text);

// Hyperparameters of one individual-specific process plus its noise.
struct IndividualParams {
    KernelParams kernel;
    NoiseParams noise;

    bool operator==(const IndividualParams&) const = default;
};

struct ModelParams {
    HpMode mode = HpMode::Common;
    KernelParams mean_kernel;
    double prior_mean = 0.0;
    // Used in Common mode.
    IndividualParams shared;
    // Used in IndividualSpecific mode, keyed by individual id.
    std::map<std::string, IndividualParams> per_individual;

    const IndividualParams& for_individual(const std::string& id) const;
    void validate() const;
    bool operator==(const ModelParams&) const = default;
};

// Gaussian belief over the shared mean process on a sorted grid of ages.
struct HyperPosterior {
    std::vector<double> grid;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    // Index of the grid point within `tolerance` of `age`, if any.
    std::optional<Eigen::Index> find(double age, double tolerance = 1e-9) const;
    void validate() const;
};

struct TrainedModel {
    ModelParams params;
    // Diagonal nugget added to the mean-process prior covariance; selected by
    // safe_cholesky on the training grid and kept fixed for prediction.
    double mean_process_nugget = 0.0;
    HyperPosterior hyper_posterior;
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_history;
    int em_iterations = 0;
    int restart_index = 0;
    std::uint64_t seed = 0;
    // One entry per restart; NaN marks a failed restart.
    std::vector<double> restart_log_likelihoods;
    std::vector<std::string> restart_failures;
};

}  // namespace magma
