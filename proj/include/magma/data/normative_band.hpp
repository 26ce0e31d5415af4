#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace magma {

struct BandKnot {
    double age = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

// Age-dependent reference range, linearly interpolated between knots.
class NormativeBand {
public:
    explicit NormativeBand(std::vector<BandKnot> knots);

    const std::vector<BandKnot>& knots() const { return knots_; }
    double min_age() const { return knots_.front().age; }
    double max_age() const { return knots_.back().age; }
    bool covers(double age) const { return age >= min_age() && age <= max_age(); }

    // Throws DomainError outside [min_age, max_age].
    double lower_at(double age) const;
    double upper_at(double age) const;

private:
    std::vector<BandKnot> knots_;
};

// Header `age_years,lower,upper`.
NormativeBand parse_band_csv(std::string_view text);

}  // namespace magma
