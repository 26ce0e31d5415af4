#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace magma {

// One measurement: age in years, value in ng/ml.
struct Observation {
    double age = 0.0;
    double value = 0.0;

    void validate() const;
    bool operator==(const Observation&) const = default;
};

// A subject with at least one observation, strictly increasing in age.
class Individual {
public:
    Individual(std::string id, std::vector<Observation> observations);

    const std::string& id() const { return id_; }
    const std::vector<Observation>& observations() const { return observations_; }
    std::size_t size() const { return observations_.size(); }
    std::vector<double> ages() const;
    std::vector<double> values() const;

    bool operator==(const Individual&) const = default;

private:
    std::string id_;
    std::vector<Observation> observations_;
};

class Cohort {
public:
    explicit Cohort(std::vector<Individual> individuals);

    const std::vector<Individual>& individuals() const { return individuals_; }
    std::size_t size() const { return individuals_.size(); }
    std::size_t observation_count() const;
    const Individual* find(std::string_view id) const;
    double mean_value() const;

    bool operator==(const Cohort&) const = default;

private:
    std::vector<Individual> individuals_;
};

struct CsvParseResult {
    std::vector<Individual> individuals;
    std::vector<std::string> warnings;
};

// Parses `patient_id,age_years,value` rows. Rows are grouped by id in order of
// first appearance; duplicate ages within an id are averaged with a warning.
// A header-only input yields no individuals.
CsvParseResult parse_observation_csv(std::string_view text);

// As parse_observation_csv but requires a non-empty cohort.
Cohort parse_cohort_csv(std::string_view text, std::vector<std::string>* warnings = nullptr);

std::string serialize_cohort_csv(const Cohort& cohort);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

struct SplitSpec {
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
};

struct CohortSplit {
    Cohort train;
    Cohort test;
};

// Singletons are forced into train; the remaining individuals are shuffled by
// the seeded generator and the first N - round(N * train_fraction) become test.
CohortSplit quasi_random_split(const Cohort& cohort, const SplitSpec& spec);

struct PredictionEvaluationSplit {
    std::vector<Observation> prediction;
    std::vector<Observation> evaluation;
};

// floor(n/2) observations for prediction, ceil(n/2) for evaluation, chosen
// uniformly at random. Both halves are returned in ascending age order.
PredictionEvaluationSplit prediction_evaluation_split(const Individual& individual, std::uint64_t seed);

}  // namespace magma
