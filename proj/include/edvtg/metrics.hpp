// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Grounding evaluation: Recall@1 at IoU thresholds, mean IoU, IoP metrics
// for question grounding, and confidence-ranked AP for article grounding.
//
// Queries whose ground truth is a point annotation have no span to overlap
// and are left out of every metric (they are counted in the report).

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edvtg/dataset.hpp"
#include "edvtg/interval.hpp"

namespace edvtg {

struct PredictionRecord {
    std::string video_id;
    std::string query_id;
    std::optional<TemporalInterval> interval;
    double confidence = 0.0;
    bool groundable = false;
    bool no_emission = false;
    std::optional<std::string> enriched_text;

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct GroundTruth {
    std::string video_id;
    std::string query_id;
    QueryTarget target;
};

std::vector<GroundTruth> ground_truths(const std::vector<GroundingSample>& samples);

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

double recall_at(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts, double m);
double mean_iou(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts);

struct IopMetrics {
    double miop = 0.0;
    double iop_03 = 0.0;
    double iop_05 = 0.0;
    double miou = 0.0;
    double iou_03 = 0.0;
    double iou_05 = 0.0;
    std::size_t zero_length = 0;
};
IopMetrics iop_metrics(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts);

struct ApMetrics {
    std::vector<std::pair<double, double>> ap;  // (threshold, AP)
    double map = 0.0;                           // mean over thresholds
};
ApMetrics article_map(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts,
                      std::span<const double> thresholds);
/// 0.3, 0.4, 0.5, 0.6, 0.7
std::vector<double> default_ap_thresholds();

struct MetricReport {
    std::string protocol;
    std::vector<std::pair<std::string, double>> values;
    std::size_t evaluated = 0;
    std::size_t missing = 0;
    std::size_t no_emission = 0;
    std::size_t zero_length = 0;
    std::size_t point_targets = 0;
    std::size_t unmatched_predictions = 0;

    double value(const std::string& name) const;
    nlohmann::json to_json() const;
    std::string to_table() const;
};

class ProtocolMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Protocol must equal the task of every sample.
MetricReport score_protocol(Task protocol, const std::vector<PredictionRecord>& preds,
                            const std::vector<GroundingSample>& samples);

nlohmann::json to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const nlohmann::json& j);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path);

}  // namespace edvtg
