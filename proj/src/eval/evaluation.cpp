#include "magma/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "magma/core/errors.hpp"
#include "magma/core/random.hpp"

namespace magma {

double rmse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) throw DomainError("rmse: length mismatch");
    if (predicted.empty()) throw DomainError("rmse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - actual[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(predicted.size()));
}

double cic95(std::span<const double> lower, std::span<const double> upper, std::span<const double> actual) {
    if (lower.size() != upper.size() || lower.size() != actual.size()) throw DomainError("cic95: length mismatch");
    if (actual.empty()) throw DomainError("cic95: empty input");
    std::size_t covered = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (lower[i] > upper[i]) throw DomainError("cic95: lower bound exceeds upper bound");
        if (lower[i] <= actual[i] && actual[i] <= upper[i]) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(actual.size());
}

std::uint64_t case_seed(std::uint64_t seed, const std::string& id) { return entity_seed(seed, id); }

std::string_view to_string(TestHpSource source) { return source == TestHpSource::Shared ? "shared" : "refit"; }

void recompute_aggregates(EvaluationReport& report) {
    if (report.per_case.empty()) throw DomainError("evaluation report has no cases");
    double rmse_sum = 0.0;
    double sq_weighted = 0.0;
    double weight = 0.0;
    int covered = 0;
    for (const auto& c : report.per_case) {
        rmse_sum += c.rmse;
        sq_weighted += c.n_evaluation * c.rmse * c.rmse;
        weight += c.n_evaluation;
        covered += c.n_covered;
    }
    report.mean_rmse_unweighted = rmse_sum / static_cast<double>(report.per_case.size());
    report.mean_rmse_pooled = std::sqrt(sq_weighted / weight);
    report.overall_cic95 = covered / weight;
}

EvaluationReport evaluate_test_set(const TrainedModel& model, const Cohort& test, std::uint64_t seed) {
    EvaluationReport report;
    report.hp_mode = model.params.mode;
    report.hp_source = model.params.mode == HpMode::Common ? TestHpSource::Shared : TestHpSource::Refit;
    report.seed = seed;

    for (const auto& ind : test.individuals()) {
        const auto split = prediction_evaluation_split(ind, case_seed(seed, ind.id()));
        std::vector<double> eval_ages;
        std::vector<double> actual;
        for (const auto& o : split.evaluation) {
            eval_ages.push_back(o.age);
            actual.push_back(o.value);
        }
        const auto params = fit_new_individual_hps(model, split.prediction);
        const auto pred =
            predict_trajectory(model, split.prediction, eval_ages, params, PredictionScale::Observation);

        CaseResult c;
        c.case_id = ind.id();
        c.n_prediction = static_cast<int>(split.prediction.size());
        c.n_evaluation = static_cast<int>(split.evaluation.size());
        std::span<const double> mean(pred.mean.data(), static_cast<std::size_t>(pred.mean.size()));
        std::span<const double> lo(pred.lower95.data(), static_cast<std::size_t>(pred.lower95.size()));
        std::span<const double> hi(pred.upper95.data(), static_cast<std::size_t>(pred.upper95.size()));
        c.rmse = rmse(mean, actual);
        c.cic95 = cic95(lo, hi, actual);
        for (std::size_t k = 0; k < actual.size(); ++k) {
            if (lo[k] <= actual[k] && actual[k] <= hi[k]) ++c.n_covered;
        }
        report.per_case.push_back(std::move(c));
    }
    std::sort(report.per_case.begin(), report.per_case.end(),
              [](const CaseResult& a, const CaseResult& b) { return a.case_id < b.case_id; });
    recompute_aggregates(report);
    return report;
}

BandCoverage band_coverage(const TrajectoryPrediction& prediction, const NormativeBand& band) {
    const auto n = prediction.targets.size();
    if (n == 0) throw DomainError("band_coverage: empty prediction");
    std::size_t mean_in = 0;
    std::size_t interval_in = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double age = prediction.targets[i];
        if (!band.covers(age)) throw DomainError("target age " + std::to_string(age) + " outside the band span");
        const double lo = band.lower_at(age);
        const double hi = band.upper_at(age);
        const auto k = static_cast<Eigen::Index>(i);
        if (lo <= prediction.mean(k) && prediction.mean(k) <= hi) ++mean_in;
        if (lo <= prediction.lower95(k) && prediction.upper95(k) <= hi) ++interval_in;
    }
    return {static_cast<double>(mean_in) / static_cast<double>(n), static_cast<double>(interval_in) / static_cast<double>(n)};
}

}  // namespace magma
