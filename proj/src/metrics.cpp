// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "edvtg/metrics.hpp"

namespace edvtg {

using nlohmann::json;

namespace {

using Key = std::pair<std::string, std::string>;

// IoUs of grid-aligned spans land on thresholds like 0.3 up to rounding
constexpr double kThresholdSlack = 1e-9;

bool meets(double v, double m) { return v >= m - kThresholdSlack; }

std::map<Key, const PredictionRecord*> index_predictions(const std::vector<PredictionRecord>& preds) {
    std::map<Key, const PredictionRecord*> out;
    for (const auto& p : preds) {
        if (!out.emplace(Key{p.video_id, p.query_id}, &p).second) {
            throw MetricError("duplicate prediction for video '" + p.video_id + "' query '" + p.query_id + "'");
        }
    }
    return out;
}

// Predicted interval for an interval ground truth, or nullopt when missing.
std::optional<TemporalInterval> lookup(const std::map<Key, const PredictionRecord*>& idx, const GroundTruth& gt) {
    auto it = idx.find({gt.video_id, gt.query_id});
    if (it == idx.end()) return std::nullopt;
    const auto* p = it->second;
    if (p->no_emission || !p->groundable) return std::nullopt;
    return p->interval;
}

std::vector<double> interval_ious(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts) {
    const auto idx = index_predictions(preds);
    std::vector<double> out;
    for (const auto& gt : gts) {
        const auto* iv = std::get_if<TemporalInterval>(&gt.target);
        if (!iv) continue;
        const auto p = lookup(idx, gt);
        out.push_back(p ? iou(*p, *iv) : 0.0);
    }
    return out;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double frac_at(const std::vector<double>& v, double m) {
    if (v.empty()) return 0.0;
    std::size_t n = 0;
    for (double x : v) n += meets(x, m) ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(v.size());
}

void check_confidence(const PredictionRecord& p) {
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
        throw MetricError("confidence " + std::to_string(p.confidence) + " outside [0, 1] for query '" + p.query_id + "'");
    }
}

}  // namespace

std::vector<GroundTruth> ground_truths(const std::vector<GroundingSample>& samples) {
    std::vector<GroundTruth> out;
    for (const auto& s : samples)
        for (const auto& q : s.queries) out.push_back({s.video_id, q.id, q.target});
    return out;
}

double recall_at(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts, double m) {
    return frac_at(interval_ious(preds, gts), m);
}

double mean_iou(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts) {
    return mean(interval_ious(preds, gts));
}

IopMetrics iop_metrics(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts) {
    const auto idx = index_predictions(preds);
    std::vector<double> iops, ious;
    IopMetrics r;
    for (const auto& gt : gts) {
        const auto* iv = std::get_if<TemporalInterval>(&gt.target);
        if (!iv) continue;
        const auto p = lookup(idx, gt);
        if (!p) {
            iops.push_back(0.0);
            ious.push_back(0.0);
            continue;
        }
        const auto v = iop(*p, *iv);
        if (!v) ++r.zero_length;
        iops.push_back(v.value_or(0.0));
        ious.push_back(iou(*p, *iv));
    }
    r.miop = mean(iops);
    r.iop_03 = frac_at(iops, 0.3);
    r.iop_05 = frac_at(iops, 0.5);
    r.miou = mean(ious);
    r.iou_03 = frac_at(ious, 0.3);
    r.iou_05 = frac_at(ious, 0.5);
    return r;
}

std::vector<double> default_ap_thresholds() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }

ApMetrics article_map(const std::vector<PredictionRecord>& preds, const std::vector<GroundTruth>& gts,
                      std::span<const double> thresholds) {
    for (const auto& p : preds) check_confidence(p);
    const auto idx = index_predictions(preds);
    std::map<Key, const GroundTruth*> by_key;
    std::size_t positives = 0;
    for (const auto& gt : gts) {
        if (std::holds_alternative<PointAnnotation>(gt.target)) continue;
        by_key[{gt.video_id, gt.query_id}] = &gt;
        if (std::holds_alternative<TemporalInterval>(gt.target)) ++positives;
    }

    std::vector<const PredictionRecord*> ranked;
    for (const auto& p : preds) {
        if (!p.groundable || p.no_emission || !p.interval) continue;
        if (!by_key.count({p.video_id, p.query_id})) continue;
        ranked.push_back(&p);
    }
    std::sort(ranked.begin(), ranked.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
        if (a->confidence != b->confidence) return a->confidence > b->confidence;
        if (a->query_id != b->query_id) return a->query_id < b->query_id;
        return a->video_id < b->video_id;
    });

    ApMetrics r;
    for (double tau : thresholds) {
        double sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            const auto* gt = by_key.at({ranked[i]->video_id, ranked[i]->query_id});
            const auto* iv = std::get_if<TemporalInterval>(&gt->target);
            if (iv && meets(iou(*ranked[i]->interval, *iv), tau)) {
                ++hits;
                sum += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        const double ap = positives ? sum / static_cast<double>(positives) : 0.0;
        r.ap.emplace_back(tau, ap);
        r.map += ap;
    }
    if (!thresholds.empty()) r.map /= static_cast<double>(thresholds.size());
    return r;
}

double MetricReport::value(const std::string& name) const {
    for (const auto& [k, v] : values)
        if (k == name) return v;
    throw std::out_of_range("metric report has no value named " + name);
}

json MetricReport::to_json() const {
    json metrics = json::object();
    for (const auto& [k, v] : values) metrics[k] = v;
    return {{"protocol", protocol},
            {"metrics", std::move(metrics)},
            {"evaluated", evaluated},
            {"missing", missing},
            {"no_emission", no_emission},
            {"zero_length_predictions", zero_length},
            {"point_targets", point_targets},
            {"unmatched_predictions", unmatched_predictions}};
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "protocol: " << protocol << "\n";
    for (const auto& [k, v] : values) os << "  " << std::left << std::setw(12) << k << std::fixed << std::setprecision(4) << v << "\n";
    os << "  evaluated " << evaluated << ", missing " << missing << ", no-emission " << no_emission;
    if (point_targets) os << ", point targets skipped " << point_targets;
    if (zero_length) os << ", zero-length predictions " << zero_length;
    if (unmatched_predictions) os << ", unmatched predictions " << unmatched_predictions;
    os << "\n";
    return os.str();
}

MetricReport score_protocol(Task protocol, const std::vector<PredictionRecord>& preds,
                            const std::vector<GroundingSample>& samples) {
    for (const auto& s : samples) {
        if (s.task != protocol) {
            throw ProtocolMismatch("sample '" + s.video_id + "' is a " + to_string(s.task) + " sample, protocol is " +
                                   to_string(protocol));
        }
    }
    const auto gts = ground_truths(samples);
    const auto idx = index_predictions(preds);
    MetricReport r;
    r.protocol = to_string(protocol);
    std::map<Key, bool> known;
    for (const auto& gt : gts) {
        known[{gt.video_id, gt.query_id}] = true;
        if (std::holds_alternative<PointAnnotation>(gt.target)) {
            ++r.point_targets;
            continue;
        }
        ++r.evaluated;
        auto it = idx.find({gt.video_id, gt.query_id});
        if (it == idx.end()) {
            ++r.missing;
        } else if (it->second->no_emission) {
            ++r.no_emission;
        }
    }
    for (const auto& p : preds)
        if (!known.count({p.video_id, p.query_id})) ++r.unmatched_predictions;

    switch (protocol) {
        case Task::stg:
        case Task::vpg: {
            const auto ious = interval_ious(preds, gts);
            r.values = {{"R@0.3", frac_at(ious, 0.3)}, {"R@0.5", frac_at(ious, 0.5)}, {"R@0.7", frac_at(ious, 0.7)},
                        {"mIoU", mean(ious)}};
            break;
        }
        case Task::qg: {
            const auto m = iop_metrics(preds, gts);
            r.zero_length = m.zero_length;
            r.values = {{"mIoP", m.miop}, {"IoP@0.3", m.iop_03}, {"IoP@0.5", m.iop_05},
                        {"mIoU", m.miou}, {"IoU@0.3", m.iou_03}, {"IoU@0.5", m.iou_05}};
            break;
        }
        case Task::ag: {
            const auto th = default_ap_thresholds();
            const auto m = article_map(preds, gts, th);
            for (const auto& [tau, ap] : m.ap) {
                std::ostringstream name;
                name << "mAP@" << std::setprecision(1) << std::fixed << tau;
                r.values.emplace_back(name.str(), ap);
            }
            r.values.emplace_back("mAP@[0.3-0.7]", m.map);
            break;
        }
    }
    return r;
}

json to_json(const PredictionRecord& p) {
    json j = {{"video_id", p.video_id},
              {"query_id", p.query_id},
              {"start", p.interval ? json(p.interval->start) : json(nullptr)},
              {"end", p.interval ? json(p.interval->end) : json(nullptr)},
              {"confidence", p.confidence},
              {"groundable", p.groundable}};
    if (p.no_emission) j["no_emission"] = true;
    if (p.enriched_text) j["enriched_text"] = *p.enriched_text;
    return j;
}

PredictionRecord prediction_from_json(const json& j) {
    auto req = [&](const char* k) -> const json& {
        if (!j.is_object() || !j.contains(k)) throw DataError(std::string(k) + ": missing field");
        return j.at(k);
    };
    PredictionRecord p;
    try {
        p.video_id = req("video_id").get<std::string>();
        p.query_id = req("query_id").get<std::string>();
        const json& s = req("start");
        const json& e = req("end");
        if (s.is_null() != e.is_null()) throw DataError("start/end: both or neither must be null");
        if (!s.is_null()) {
            const double a = s.get<double>();
            const double b = e.get<double>();
            if (!(a >= 0.0 && a <= 1.0)) throw DataError("start: must lie in [0, 1]");
            if (!(b >= 0.0 && b <= 1.0)) throw DataError("end: must lie in [0, 1]");
            if (b < a) throw DataError("end: end < start");
            p.interval = TemporalInterval{a, b};
        }
        p.confidence = req("confidence").get<double>();
        if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) throw DataError("confidence: must lie in [0, 1]");
        p.groundable = req("groundable").get<bool>();
        if (p.groundable && !p.interval) throw DataError("groundable: true requires start and end");
        if (j.contains("no_emission")) p.no_emission = j.at("no_emission").get<bool>();
        if (j.contains("enriched_text")) p.enriched_text = j.at("enriched_text").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("wrong field type: ") + e.what());
    }
    return p;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open prediction file " + path.string());
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw DataError("malformed JSON");
            out.push_back(prediction_from_json(j));
        } catch (const DataError& e) {
            throw DataError(path.string() + ": line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write prediction file " + path.string());
    for (const auto& p : preds) out << to_json(p).dump() << "\n";
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace edvtg
