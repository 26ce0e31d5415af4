#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "magma/data/cohort.hpp"
#include "magma/data/normative_band.hpp"
#include "magma/predict/predict.hpp"
#include "magma/train/model.hpp"

namespace magma {

double rmse(std::span<const double> predicted, std::span<const double> actual);

// Fraction of points with lower <= actual <= upper.
double cic95(std::span<const double> lower, std::span<const double> upper, std::span<const double> actual);

struct CaseResult {
    std::string case_id;
    int n_prediction = 0;
    int n_evaluation = 0;
    double rmse = 0.0;
    double cic95 = 0.0;
    int n_covered = 0;
};

enum class TestHpSource { Shared, Refit };

struct EvaluationReport {
    std::vector<CaseResult> per_case;  // ordered by case id
    double mean_rmse_unweighted = 0.0;
    // sqrt(sum n_i rmse_i^2 / sum n_i) over evaluation counts n_i.
    double mean_rmse_pooled = 0.0;
    // Covered evaluation points over all evaluation points.
    double overall_cic95 = 0.0;
    HpMode hp_mode = HpMode::Common;
    TestHpSource hp_source = TestHpSource::Shared;
    std::uint64_t seed = 0;
};

// Per-case split seed: entity_seed(seed, id), so adding a patient does not
// reshuffle the others.
std::uint64_t case_seed(std::uint64_t seed, const std::string& id);

// Splits each test individual into prediction and evaluation halves, predicts
// at the evaluation ages (observation scale, so measurement noise is part of
// the interval) and scores the result. Common-mode models reuse their shared
// parameters; individual-specific models refit them per case.
EvaluationReport evaluate_test_set(const TrainedModel& model, const Cohort& test, std::uint64_t seed);

// Recomputes the aggregate fields from per_case.
void recompute_aggregates(EvaluationReport& report);

std::string_view to_string(TestHpSource source);

struct BandCoverage {
    double mean_in_band = 0.0;
    double interval_in_band = 0.0;
};

BandCoverage band_coverage(const TrajectoryPrediction& prediction, const NormativeBand& band);

}  // namespace magma
