// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint container.
//
//   "EDVTGCKP" | u32 version | u64 header bytes | JSON header | f64 payload
//
// The header lists parameters in order with their shapes; the payload holds
// the parameter values followed, when present, by the AdamW moments.
// Doubles are written raw (little-endian hosts), so round trips are exact.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edvtg/model.hpp"

namespace edvtg {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParamBlob {
    std::string name;
    ad::Shape shape;
    bool decay = false;
    std::vector<double> values;

    friend bool operator==(const ParamBlob&, const ParamBlob&) = default;
};

struct Checkpoint {
    ModelConfig model;
    nlohmann::json train_config = nlohmann::json::object();
    std::vector<std::string> vocab;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    std::vector<ParamBlob> params;
    bool has_optimizer = false;
    std::uint64_t adam_t = 0;
    std::vector<std::vector<double>> adam_m, adam_v;

    static Checkpoint capture(const GroundingModel& model);
    /// Builds a model from the stored config and loads its values.
    GroundingModel restore_model() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t checkpoint_version = 1;

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace edvtg
