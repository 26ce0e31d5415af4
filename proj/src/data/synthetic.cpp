#include "magma/data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "magma/core/errors.hpp"
#include "magma/core/linalg.hpp"
#include "magma/core/random.hpp"

namespace magma {

void SyntheticConfig::validate() const {
    if (n_individuals < 1) throw ConfigError("n_individuals must be >= 1");
    if (min_observations < 1 || max_observations < min_observations) {
        throw ConfigError("observation count range must satisfy 1 <= min <= max");
    }
    if (singleton_individuals < 0 || singleton_individuals > n_individuals) {
        throw ConfigError("singleton_individuals must lie in [0, n_individuals]");
    }
    if (!std::isfinite(age_min) || !std::isfinite(age_max) || !(age_min > 0.0) || !(age_max > age_min) ||
        !(age_max < 130.0)) {
        throw ConfigError("age range must satisfy 0 < age_min < age_max < 130");
    }
    if (truth_grid_size < 2) throw ConfigError("truth_grid_size must be >= 2");
    if (!std::isfinite(prior_mean_constant)) throw ConfigError("prior_mean_constant must be finite");
    for (double a : fixed_ages) {
        if (!(a >= age_min && a <= age_max)) throw ConfigError("fixed_ages must lie within the age range");
    }
    try {
        mean_process.validate();
        individual.validate();
        noise.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

double SyntheticCohort::true_mean_at(double age) const {
    auto it = std::lower_bound(truth.begin(), truth.end(), age,
                               [](const TruthPoint& p, double a) { return p.age < a; });
    if (it == truth.end() || it->age != age) throw DomainError("no latent mean recorded at the requested age");
    return it->true_mean;
}

namespace {

Eigen::VectorXd sample_gp(const KernelParams& params, const std::vector<double>& xs, Rng& rng) {
    const Eigen::MatrixXd k = kernel_matrix(params, xs, xs);
    const CholeskyFactor chol = safe_cholesky(k);
    Eigen::VectorXd z(static_cast<Eigen::Index>(xs.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return chol.lower().triangularView<Eigen::Lower>() * z;
}

}  // namespace

SyntheticCohort synthesize_cohort(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);

    std::vector<std::vector<double>> ages(static_cast<std::size_t>(config.n_individuals));
    for (int i = 0; i < config.n_individuals; ++i) {
        auto& a = ages[static_cast<std::size_t>(i)];
        if (!config.fixed_ages.empty()) {
            a = config.fixed_ages;
            std::sort(a.begin(), a.end());
            a.erase(std::unique(a.begin(), a.end()), a.end());
            continue;
        }
        const int count = i < config.singleton_individuals
                              ? 1
                              : static_cast<int>(rng.uniform_int(config.min_observations, config.max_observations));
        while (static_cast<int>(a.size()) < count) {
            const double age = rng.uniform(config.age_min, config.age_max);
            if (age > config.age_min && std::find(a.begin(), a.end(), age) == a.end()) a.push_back(age);
        }
        std::sort(a.begin(), a.end());
    }

    std::vector<double> points;
    const int g = config.truth_grid_size;
    for (int k = 0; k < g; ++k) {
        points.push_back(config.age_min + (config.age_max - config.age_min) * k / (g - 1));
    }
    for (const auto& a : ages) points.insert(points.end(), a.begin(), a.end());
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    const Eigen::VectorXd latent = sample_gp(config.mean_process, points, rng);
    std::vector<TruthPoint> truth;
    truth.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        truth.push_back({points[k], config.prior_mean_constant + latent(static_cast<Eigen::Index>(k))});
    }
    const auto latent_at = [&](double age) {
        auto it = std::lower_bound(points.begin(), points.end(), age);
        return truth[static_cast<std::size_t>(it - points.begin())].true_mean;
    };

    std::vector<Individual> individuals;
    const int width = static_cast<int>(std::to_string(config.n_individuals).size());
    for (int i = 0; i < config.n_individuals; ++i) {
        const auto& a = ages[static_cast<std::size_t>(i)];
        const Eigen::VectorXd deviation = sample_gp(config.individual, a, rng);
        std::vector<Observation> obs;
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double noise = std::sqrt(config.noise.noise_variance) * rng.normal();
            const double value = latent_at(a[k]) + deviation(static_cast<Eigen::Index>(k)) + noise;
            if (!(value >= 0.0)) {
                throw ConfigError("synthetic value below zero; raise prior_mean_constant or lower the variances");
            }
            obs.push_back({a[k], value});
        }
        std::string id = std::to_string(i + 1);
        id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');
        individuals.emplace_back("s" + id, std::move(obs));
    }
    return SyntheticCohort{Cohort(std::move(individuals)), std::move(truth)};
}

std::string serialize_truth_csv(const std::vector<TruthPoint>& truth) {
    std::string out = "age_years,true_mean\n";
    for (const auto& p : truth) {
        out += format_double(p.age);
        out += ',';
        out += format_double(p.true_mean);
        out += '\n';
    }
    return out;
}

}  // namespace magma
