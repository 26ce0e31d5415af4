#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "magma/train/model.hpp"

namespace magma {

inline constexpr std::string_view kModelFormatVersion = "magma-model/1";

// Model document: hp_mode, parameters, grid, hyper-posterior mean and the
// row-major lower triangle of its covariance, log-likelihoods, provenance.
// `run_config` is echoed verbatim when not null.
nlohmann::json model_to_json(const TrainedModel& model, const nlohmann::json& run_config = nullptr);
TrainedModel model_from_json(const nlohmann::json& doc);

std::string serialize_model(const TrainedModel& model, const nlohmann::json& run_config = nullptr);
TrainedModel parse_model(std::string_view text);

}  // namespace magma
