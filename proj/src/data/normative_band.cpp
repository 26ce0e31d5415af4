#include "magma/data/normative_band.hpp"

#include <algorithm>
#include <cmath>

#include "magma/core/errors.hpp"
#include "text_util.hpp"

namespace magma {

NormativeBand::NormativeBand(std::vector<BandKnot> knots) : knots_(std::move(knots)) {
    if (knots_.empty()) throw DataError("normative band has no knots");
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        const auto& k = knots_[i];
        if (!std::isfinite(k.age) || !std::isfinite(k.lower) || !std::isfinite(k.upper)) {
            throw DataError("normative band has non-finite entries");
        }
        if (k.lower > k.upper) throw DataError("normative band lower exceeds upper");
        if (i > 0 && !(k.age > knots_[i - 1].age)) throw DataError("normative band ages must strictly increase");
    }
}

namespace {

double interpolate(const std::vector<BandKnot>& knots, double age, double BandKnot::*field) {
    if (!(age >= knots.front().age) || !(age <= knots.back().age)) {
        throw DomainError("age " + std::to_string(age) + " outside normative band span");
    }
    auto hi = std::lower_bound(knots.begin(), knots.end(), age,
                               [](const BandKnot& k, double a) { return k.age < a; });
    if (hi->age == age) return (*hi).*field;
    auto lo = hi - 1;
    const double t = (age - lo->age) / (hi->age - lo->age);
    return (*lo).*field + t * ((*hi).*field - (*lo).*field);
}

}  // namespace

double NormativeBand::lower_at(double age) const { return interpolate(knots_, age, &BandKnot::lower); }

double NormativeBand::upper_at(double age) const { return interpolate(knots_, age, &BandKnot::upper); }

NormativeBand parse_band_csv(std::string_view text) {
    text = detail::strip_bom(text);
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != "age_years,lower,upper") {
        throw DataError("row 1: missing header 'age_years,lower,upper'");
    }
    std::vector<BandKnot> knots;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line);
        BandKnot k;
        if (fields.size() != 3 || !detail::parse_double_field(fields[0], k.age) ||
            !detail::parse_double_field(fields[1], k.lower) || !detail::parse_double_field(fields[2], k.upper)) {
            throw DataError("row " + std::to_string(i + 1) + ": malformed band row");
        }
        knots.push_back(k);
    }
    return NormativeBand(std::move(knots));
}

}  // namespace magma
