// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON object with "model", "train", "loss",
// "generator" and "seed" sections. Every key must already exist in the
// defaults; unknown keys and wrong types are errors.

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edvtg/dataset.hpp"
#include "edvtg/model.hpp"
#include "edvtg/trainer.hpp"

namespace edvtg {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    ModelConfig model = ModelConfig::toy();
    TrainConfig train = TrainConfig::toy();
    GeneratorSpec generator;
    std::optional<std::uint64_t> seed;

    /// Validates every section; throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);  // without the loss weights
nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const GeneratorSpec& g);
nlohmann::json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& train, const nlohmann::json& loss);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

/// Merges j over the defaults. A non-null "seed" overrides every section's seed.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "a.b=value" style overrides; value is parsed as JSON when it can be,
/// else taken as a string.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace edvtg
