#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "magma/core/errors.hpp"
#include "magma/core/random.hpp"
#include "magma/data/cohort.hpp"

namespace magma {

CohortSplit quasi_random_split(const Cohort& cohort, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    const auto& all = cohort.individuals();
    const std::size_t n = all.size();
    // Round half up.
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction + 0.5));
    const std::size_t n_test = n - std::min(n_train, n);

    std::vector<std::size_t> multi;
    for (std::size_t i = 0; i < n; ++i) {
        if (all[i].size() >= 2) multi.push_back(i);
    }
    const std::size_t singletons = n - multi.size();
    if (n_test == 0 || n_test >= n) {
        throw DataError("split of " + std::to_string(n) + " individuals at train_fraction " +
                        std::to_string(spec.train_fraction) + " leaves an empty train or test set");
    }
    if (n_test > multi.size()) {
        throw DataError("infeasible split: test set needs " + std::to_string(n_test) +
                        " individuals with >= 2 observations but only " + std::to_string(multi.size()) +
                        " exist (" + std::to_string(singletons) + " singletons of " + std::to_string(n) + ")");
    }

    Rng rng(spec.seed);
    rng.shuffle(multi.begin(), multi.end());
    std::vector<bool> in_test(n, false);
    for (std::size_t k = 0; k < n_test; ++k) in_test[multi[k]] = true;

    std::vector<Individual> train;
    std::vector<Individual> test;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test : train).push_back(all[i]);
    return CohortSplit{Cohort(std::move(train)), Cohort(std::move(test))};
}

PredictionEvaluationSplit prediction_evaluation_split(const Individual& individual, std::uint64_t seed) {
    const auto& obs = individual.observations();
    const std::size_t n = obs.size();
    if (n < 2) {
        throw DataError("individual '" + individual.id() + "' needs at least 2 observations to split");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    const std::size_t n_pred = n / 2;
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_pred));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_pred), order.end());

    PredictionEvaluationSplit out;
    for (std::size_t k = 0; k < n; ++k) {
        (k < n_pred ? out.prediction : out.evaluation).push_back(obs[order[k]]);
    }
    return out;
}

}  // namespace magma
