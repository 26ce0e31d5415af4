#include "magma/data/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "magma/core/errors.hpp"
#include "text_util.hpp"

namespace magma {

namespace {

using detail::parse_double_field;
using detail::split_fields;
using detail::trim;

constexpr std::string_view kCohortHeader = "patient_id,age_years,value";

std::string row_error(std::size_t row, const std::string& what) {
    return "row " + std::to_string(row) + ": " + what;
}

}  // namespace

void Observation::validate() const {
    if (!std::isfinite(age) || !(age > 0.0) || !(age < 130.0)) {
        throw DataError("observation age must lie in (0, 130) years");
    }
    if (!std::isfinite(value) || value < 0.0) throw DataError("observation value must be finite and non-negative");
}

Individual::Individual(std::string id, std::vector<Observation> observations)
    : id_(std::move(id)), observations_(std::move(observations)) {
    if (observations_.empty()) throw DataError("individual '" + id_ + "' has no observations");
    for (const auto& o : observations_) o.validate();
    std::sort(observations_.begin(), observations_.end(),
              [](const Observation& a, const Observation& b) { return a.age < b.age; });
    for (std::size_t i = 1; i < observations_.size(); ++i) {
        if (!(observations_[i].age > observations_[i - 1].age)) {
            throw DataError("individual '" + id_ + "' has duplicate ages");
        }
    }
}

std::vector<double> Individual::ages() const {
    std::vector<double> out;
    out.reserve(observations_.size());
    for (const auto& o : observations_) out.push_back(o.age);
    return out;
}

std::vector<double> Individual::values() const {
    std::vector<double> out;
    out.reserve(observations_.size());
    for (const auto& o : observations_) out.push_back(o.value);
    return out;
}

Cohort::Cohort(std::vector<Individual> individuals) : individuals_(std::move(individuals)) {
    if (individuals_.empty()) throw DataError("cohort is empty");
    std::set<std::string_view> seen;
    for (const auto& ind : individuals_) {
        if (!seen.insert(ind.id()).second) throw DataError("duplicate individual id '" + ind.id() + "'");
    }
}

std::size_t Cohort::observation_count() const {
    std::size_t n = 0;
    for (const auto& ind : individuals_) n += ind.size();
    return n;
}

const Individual* Cohort::find(std::string_view id) const {
    for (const auto& ind : individuals_) {
        if (ind.id() == id) return &ind;
    }
    return nullptr;
}

double Cohort::mean_value() const {
    double sum = 0.0;
    for (const auto& ind : individuals_) {
        for (const auto& o : ind.observations()) sum += o.value;
    }
    return sum / static_cast<double>(observation_count());
}

CsvParseResult parse_observation_csv(std::string_view text) {
    text = detail::strip_bom(text);
    if (trim(text).empty()) throw DataError("row 1: empty file");

    struct Pending {
        std::string id;
        // age -> (sum, count), in first-appearance order of ids
        std::map<double, std::pair<double, int>> by_age;
    };
    std::vector<Pending> pending;
    std::unordered_map<std::string, std::size_t> index;

    std::size_t row = 0;
    bool header_seen = false;
    for (const auto line : detail::split_lines(text)) {
        ++row;
        const auto trimmed = trim(line);
        if (!header_seen) {
            if (trimmed != kCohortHeader) {
                throw DataError(row_error(row, "missing header '" + std::string(kCohortHeader) + "'"));
            }
            header_seen = true;
            continue;
        }
        if (trimmed.empty()) continue;
        const auto fields = split_fields(trimmed);
        if (fields.size() != 3) throw DataError(row_error(row, "expected 3 fields"));
        if (fields[0].empty()) throw DataError(row_error(row, "empty patient_id"));
        double age = 0.0;
        double value = 0.0;
        if (!parse_double_field(fields[1], age)) throw DataError(row_error(row, "non-numeric age_years"));
        if (!parse_double_field(fields[2], value)) throw DataError(row_error(row, "non-numeric value"));
        if (!std::isfinite(age) || !std::isfinite(value)) throw DataError(row_error(row, "non-finite field"));
        if (age < 0.0) throw DataError(row_error(row, "negative age_years"));
        if (value < 0.0) throw DataError(row_error(row, "negative value"));
        if (!(age > 0.0) || !(age < 130.0)) throw DataError(row_error(row, "age_years outside (0, 130)"));

        std::string id(fields[0]);
        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(id, pending.size()).first;
            pending.push_back(Pending{id, {}});
        }
        auto& slot = pending[it->second].by_age[age];
        slot.first += value;
        slot.second += 1;
    }

    CsvParseResult result;
    for (auto& p : pending) {
        std::vector<Observation> obs;
        for (const auto& [age, acc] : p.by_age) {
            if (acc.second > 1) {
                std::ostringstream os;
                os << "patient '" << p.id << "': " << acc.second << " rows at age " << format_double(age)
                   << " averaged";
                result.warnings.push_back(os.str());
            }
            obs.push_back({age, acc.first / acc.second});
        }
        result.individuals.emplace_back(p.id, std::move(obs));
    }
    return result;
}

Cohort parse_cohort_csv(std::string_view text, std::vector<std::string>* warnings) {
    auto parsed = parse_observation_csv(text);
    if (parsed.individuals.empty()) throw DataError("cohort file has no data rows");
    if (warnings) {
        warnings->insert(warnings->end(), parsed.warnings.begin(), parsed.warnings.end());
    }
    return Cohort(std::move(parsed.individuals));
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string serialize_cohort_csv(const Cohort& cohort) {
    std::string out(kCohortHeader);
    out += '\n';
    for (const auto& ind : cohort.individuals()) {
        for (const auto& o : ind.observations()) {
            out += ind.id();
            out += ',';
            out += format_double(o.age);
            out += ',';
            out += format_double(o.value);
            out += '\n';
        }
    }
    return out;
}

}  // namespace magma
