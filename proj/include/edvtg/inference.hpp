// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>
#include <vector>

#include "edvtg/metrics.hpp"
#include "edvtg/model.hpp"

namespace edvtg {

enum class EvalMode {
    enrich_detect,  // greedy generation of the rewritten query, then <INT>
    direct_only,    // original query forced, immediately followed by <INT>
};

EvalMode parse_eval_mode(std::string_view name);
std::string to_string(EvalMode m);

struct PredictOptions {
    EvalMode mode = EvalMode::enrich_detect;
    /// 0: up to the model's text budget.
    std::size_t max_new_tokens = 0;
    /// When set, generated text is attached to each record.
    const Vocabulary* vocab = nullptr;
};

/// One record per query, in sample order.
std::vector<PredictionRecord> predict(const GroundingModel& model, const GroundingSample& s, const PredictOptions& opts);
std::vector<PredictionRecord> predict(const GroundingModel& model, const std::vector<GroundingSample>& samples,
                                      const PredictOptions& opts);

}  // namespace edvtg
