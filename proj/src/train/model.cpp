#include "magma/train/model.hpp"

#include <algorithm>
#include <cmath>

#include "magma/core/errors.hpp"

namespace magma {

std::string_view to_string(HpMode mode) { return mode == HpMode::Common ? "common" : "individual"; }

HpMode parse_hp_mode(std::string_view text) {
    if (text == "common") return HpMode::Common;
    if (text == "individual" || text == "individual-specific") return HpMode::IndividualSpecific;
    throw ConfigError("unknown hp mode '" + std::string(text) + "' (expected common or individual)");
}

const IndividualParams& ModelParams::for_individual(const std::string& id) const {
    if (mode == HpMode::Common) return shared;
    const auto it = per_individual.find(id);
    if (it == per_individual.end()) throw DomainError("no hyperparameters for individual '" + id + "'");
    return it->second;
}

void ModelParams::validate() const {
    mean_kernel.validate();
    if (!std::isfinite(prior_mean)) throw DomainError("prior mean must be finite");
    if (mode == HpMode::Common) {
        shared.kernel.validate();
        shared.noise.validate();
        if (!per_individual.empty()) throw DomainError("common mode must not carry per-individual parameters");
    } else {
        for (const auto& [id, p] : per_individual) {
            p.kernel.validate();
            p.noise.validate();
        }
    }
}

std::optional<Eigen::Index> HyperPosterior::find(double age, double tolerance) const {
    auto it = std::lower_bound(grid.begin(), grid.end(), age);
    std::optional<Eigen::Index> best;
    double best_dist = tolerance;
    for (auto cand : {it, it == grid.begin() ? it : it - 1}) {
        if (cand == grid.end()) continue;
        const double dist = std::abs(*cand - age);
        if (dist <= best_dist) {
            best_dist = dist;
            best = static_cast<Eigen::Index>(cand - grid.begin());
        }
    }
    return best;
}

void HyperPosterior::validate() const {
    const auto n = static_cast<Eigen::Index>(grid.size());
    if (n == 0) throw DomainError("hyper-posterior grid is empty");
    for (Eigen::Index i = 1; i < n; ++i) {
        if (!(grid[static_cast<std::size_t>(i)] > grid[static_cast<std::size_t>(i - 1)])) {
            throw DomainError("hyper-posterior grid must be strictly increasing");
        }
    }
    if (mean.size() != n || covariance.rows() != n || covariance.cols() != n) {
        throw DomainError("hyper-posterior dimensions do not match its grid");
    }
}

}  // namespace magma
