#include "magma/cli/config.hpp"

#include <cmath>
#include <string>

#include "../data/text_util.hpp"
#include "magma/core/errors.hpp"

namespace magma::cli {

using nlohmann::json;

namespace {

template <class T>
T field(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

KernelParams kernel_field(const json& doc, const char* key, KernelParams fallback) {
    if (!doc.contains(key)) return fallback;
    const auto& k = doc.at(key);
    if (!k.is_object()) throw ConfigError(std::string("config field '") + key + "' must be an object");
    return KernelParams{field(k, "variance", fallback.variance), field(k, "lengthscale", fallback.lengthscale)};
}

double parse_number(std::string_view text, std::string_view what) {
    double v = 0.0;
    if (!detail::parse_double_field(detail::trim(text), v) || !std::isfinite(v)) {
        throw ConfigError("malformed " + std::string(what) + " '" + std::string(text) + "'");
    }
    return v;
}

}  // namespace

void RunConfig::validate() const {
    if (n_restarts < 1) throw ConfigError("restarts must be >= 1");
    if (em_max_iter < 1) throw ConfigError("em-max-iter must be >= 1");
    if (!(em_rel_tol >= 0.0)) throw ConfigError("em-rel-tol must be >= 0");
    if (grid_extra_resolution < 0) throw ConfigError("grid-resolution must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train-fraction must lie in (0, 1)");
}

json to_json(const RunConfig& c) {
    return json{{"seed", c.seed},
                {"hp_mode", std::string(to_string(c.hp_mode))},
                {"n_restarts", c.n_restarts},
                {"em_max_iter", c.em_max_iter},
                {"em_rel_tol", c.em_rel_tol},
                {"grid_extra_resolution", c.grid_extra_resolution},
                {"train_fraction", c.train_fraction}};
}

RunConfig run_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    static const char* const kKnown[] = {"seed",       "hp_mode",   "n_restarts",    "em_max_iter",
                                         "em_rel_tol", "grid_extra_resolution", "train_fraction", "synthetic"};
    for (const auto& [key, value] : doc.items()) {
        bool known = false;
        for (const char* k : kKnown) known = known || key == k;
        if (!known) throw ConfigError("unknown config field '" + key + "'");
    }
    RunConfig c;
    c.seed = field(doc, "seed", c.seed);
    if (doc.contains("hp_mode")) c.hp_mode = parse_hp_mode(field<std::string>(doc, "hp_mode", ""));
    c.n_restarts = field(doc, "n_restarts", c.n_restarts);
    c.em_max_iter = field(doc, "em_max_iter", c.em_max_iter);
    c.em_rel_tol = field(doc, "em_rel_tol", c.em_rel_tol);
    c.grid_extra_resolution = field(doc, "grid_extra_resolution", c.grid_extra_resolution);
    c.train_fraction = field(doc, "train_fraction", c.train_fraction);
    return c;
}

json to_json(const SyntheticConfig& c) {
    const auto kernel = [](const KernelParams& k) { return json{{"variance", k.variance}, {"lengthscale", k.lengthscale}}; };
    json out{{"n_individuals", c.n_individuals},
             {"min_observations", c.min_observations},
             {"max_observations", c.max_observations},
             {"singleton_individuals", c.singleton_individuals},
             {"age_min", c.age_min},
             {"age_max", c.age_max},
             {"mean_process", kernel(c.mean_process)},
             {"individual", kernel(c.individual)},
             {"noise_variance", c.noise.noise_variance},
             {"prior_mean_constant", c.prior_mean_constant},
             {"truth_grid_size", c.truth_grid_size}};
    if (!c.fixed_ages.empty()) out["fixed_ages"] = c.fixed_ages;
    return out;
}

SyntheticConfig synthetic_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("synthetic config must be a JSON object");
    SyntheticConfig c;
    c.n_individuals = field(doc, "n_individuals", c.n_individuals);
    c.min_observations = field(doc, "min_observations", c.min_observations);
    c.max_observations = field(doc, "max_observations", c.max_observations);
    c.singleton_individuals = field(doc, "singleton_individuals", c.singleton_individuals);
    c.age_min = field(doc, "age_min", c.age_min);
    c.age_max = field(doc, "age_max", c.age_max);
    c.mean_process = kernel_field(doc, "mean_process", c.mean_process);
    c.individual = kernel_field(doc, "individual", c.individual);
    c.noise.noise_variance = field(doc, "noise_variance", c.noise.noise_variance);
    c.prior_mean_constant = field(doc, "prior_mean_constant", c.prior_mean_constant);
    c.truth_grid_size = field(doc, "truth_grid_size", c.truth_grid_size);
    c.fixed_ages = field(doc, "fixed_ages", c.fixed_ages);
    c.validate();
    return c;
}

std::vector<double> parse_grid_spec(std::string_view spec) {
    const auto first = spec.find(':');
    const auto second = first == std::string_view::npos ? first : spec.find(':', first + 1);
    if (second == std::string_view::npos || spec.find(':', second + 1) != std::string_view::npos) {
        throw ConfigError("grid spec must look like start:stop:count, got '" + std::string(spec) + "'");
    }
    const double start = parse_number(spec.substr(0, first), "grid start");
    const double stop = parse_number(spec.substr(first + 1, second - first - 1), "grid stop");
    const double count_value = parse_number(spec.substr(second + 1), "grid count");
    if (count_value < 1.0 || count_value != std::floor(count_value) || count_value > 1e6) {
        throw ConfigError("grid count must be a positive integer");
    }
    const auto count = static_cast<int>(count_value);
    if (count == 1) {
        if (start != stop) throw ConfigError("a one-point grid needs start == stop");
        return {start};
    }
    if (!(start < stop)) throw ConfigError("grid start must be below grid stop");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = start + (stop - start) * i / (count - 1);
    out.back() = stop;
    return out;
}

std::vector<double> parse_target_list(std::string_view spec) {
    std::vector<double> out;
    for (const auto f : detail::split_fields(spec)) {
        const double v = parse_number(f, "target age");
        if (!out.empty() && !(v > out.back())) throw ConfigError("target ages must be strictly increasing");
        out.push_back(v);
    }
    return out;
}

}  // namespace magma::cli
