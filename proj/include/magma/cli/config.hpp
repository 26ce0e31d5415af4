#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "magma/data/synthetic.hpp"
#include "magma/train/model.hpp"

namespace magma::cli {

inline constexpr std::string_view kArtifactFormatVersion = "magma-artifact/1";

struct RunConfig {
    std::uint64_t seed = 0;
    HpMode hp_mode = HpMode::Common;
    int n_restarts = 25;
    int em_max_iter = 100;
    double em_rel_tol = 1e-4;
    int grid_extra_resolution = 200;
    double train_fraction = 0.75;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

// Reads the run-config keys of a config document. Unknown top-level keys other
// than "synthetic" are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const SyntheticConfig& config);

// Fields absent from `doc` keep their defaults.
SyntheticConfig synthetic_config_from_json(const nlohmann::json& doc);

// "start:stop:count", inclusive of both ends.
std::vector<double> parse_grid_spec(std::string_view spec);

// Comma-separated ages in strictly increasing order.
std::vector<double> parse_target_list(std::string_view spec);

}  // namespace magma::cli
