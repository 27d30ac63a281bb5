// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "edvtg/dataset.hpp"

namespace edvtg {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw DataError(path + ": " + msg);
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing field");
    return *it;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "value is not finite");
    return v;
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

std::vector<int> get_tokens(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of token ids");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& e = j[i];
        if (!e.is_number_integer()) fail(path + "[" + std::to_string(i) + "]", "expected an integer token id");
        out.push_back(e.get<int>());
    }
    return out;
}

QueryTarget parse_target(const json& j, const std::string& path) {
    const std::string kind = get_string(field(j, "kind", path), join(path, "kind"));
    if (kind == "interval") {
        const double s = get_number(field(j, "start", path), join(path, "start"));
        const double e = get_number(field(j, "end", path), join(path, "end"));
        if (s < 0.0 || s > 1.0) fail(join(path, "start"), "must lie in [0, 1]");
        if (e < 0.0 || e > 1.0) fail(join(path, "end"), "must lie in [0, 1]");
        if (e < s) fail(join(path, "end"), "end < start");
        return TemporalInterval{s, e};
    }
    if (kind == "point") {
        const double t = get_number(field(j, "t", path), join(path, "t"));
        if (t < 0.0 || t > 1.0) fail(join(path, "t"), "must lie in [0, 1]");
        return PointAnnotation{t};
    }
    if (kind == "none") return NoTarget{};
    fail(join(path, "kind"), "unknown target kind '" + kind + "'");
}

json target_to_json(const QueryTarget& t) {
    if (const auto* iv = std::get_if<TemporalInterval>(&t)) return {{"kind", "interval"}, {"start", iv->start}, {"end", iv->end}};
    if (const auto* p = std::get_if<PointAnnotation>(&t)) return {{"kind", "point"}, {"t", p->t}};
    return {{"kind", "none"}};
}

void check_tokens(const std::vector<int>& ids, const std::string& path) {
    if (ids.empty()) fail(path, "token list must not be empty");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < tok::first_content) {
            fail(path + "[" + std::to_string(i) + "]", "reserved id " + std::to_string(ids[i]) + " used as content");
        }
    }
}

}  // namespace

void validate(const GroundingSample& s) {
    if (s.video_id.empty()) fail("video_id", "must not be empty");
    if (!(s.duration_seconds > 0.0) || !std::isfinite(s.duration_seconds)) fail("duration", "must be positive");
    const auto& f = s.features;
    if (f.rows == 0 || f.cols == 0 || f.values.size() != f.rows * f.cols) fail("features", "ragged or empty matrix");
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        if (!std::isfinite(f.values[i])) {
            fail("features[" + std::to_string(i / f.cols) + "][" + std::to_string(i % f.cols) + "]", "not finite");
        }
    }
    if (s.queries.empty()) fail("queries", "at least one query is required");
    std::set<std::string> ids;
    for (std::size_t q = 0; q < s.queries.size(); ++q) {
        const auto& qa = s.queries[q];
        const std::string path = "queries[" + std::to_string(q) + "]";
        if (qa.id.empty()) fail(path + ".id", "must not be empty");
        if (!ids.insert(qa.id).second) fail(path + ".id", "duplicate query id '" + qa.id + "'");
        check_tokens(qa.query_tokens, path + ".query_tokens");
        if (qa.enriched_tokens) check_tokens(*qa.enriched_tokens, path + ".enriched_tokens");
        if (const auto* iv = std::get_if<TemporalInterval>(&qa.target); iv && !iv->valid()) {
            fail(path + ".target", "invalid interval " + to_string(*iv));
        }
        if (const auto* p = std::get_if<PointAnnotation>(&qa.target); p && !(p->t >= 0.0 && p->t <= 1.0)) {
            fail(path + ".target.t", "must lie in [0, 1]");
        }
        if (!qa.groundable() && s.task != Task::ag) fail(path + ".target", "kind 'none' is only allowed for ag samples");
    }
    switch (s.task) {
        case Task::stg:
        case Task::qg:
            if (s.queries.size() != 1) fail("queries", to_string(s.task) + " samples need exactly one query");
            break;
        case Task::vpg: {
            if (s.queries.size() < 2) fail("queries", "vpg samples need at least two queries");
            double prev = -1.0;
            for (std::size_t q = 0; q < s.queries.size(); ++q) {
                const auto* iv = std::get_if<TemporalInterval>(&s.queries[q].target);
                const std::string path = "queries[" + std::to_string(q) + "].target";
                if (!iv) fail(path, "vpg queries need interval targets");
                if (iv->start < prev) fail(path + ".start", "vpg queries must be ordered by start");
                prev = iv->start;
            }
            break;
        }
        case Task::ag: break;
    }
}

GroundingSample parse_jsonl_line(std::string_view line, std::size_t line_number) {
    const std::string where = "line " + std::to_string(line_number) + ": ";
    try {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail("<root>", std::string("malformed JSON: ") + e.what());
        }
        GroundingSample s;
        s.video_id = get_string(field(j, "video_id", ""), "video_id");
        s.duration_seconds = get_number(field(j, "duration", ""), "duration");
        try {
            s.task = parse_task(get_string(field(j, "task", ""), "task"));
        } catch (const std::invalid_argument& e) {
            fail("task", e.what());
        }

        const json& feats = field(j, "features", "");
        if (!feats.is_array() || feats.empty()) fail("features", "expected a non-empty array of rows");
        s.features.rows = feats.size();
        for (std::size_t r = 0; r < feats.size(); ++r) {
            const std::string rp = "features[" + std::to_string(r) + "]";
            if (!feats[r].is_array() || feats[r].empty()) fail(rp, "expected a non-empty array");
            if (r == 0) s.features.cols = feats[r].size();
            if (feats[r].size() != s.features.cols) fail(rp, "row length differs from features[0]");
            for (std::size_t c = 0; c < feats[r].size(); ++c)
                s.features.values.push_back(get_number(feats[r][c], rp + "[" + std::to_string(c) + "]"));
        }

        const json& qs = field(j, "queries", "");
        if (!qs.is_array()) fail("queries", "expected an array");
        for (std::size_t q = 0; q < qs.size(); ++q) {
            const std::string qp = "queries[" + std::to_string(q) + "]";
            QueryAnnotation qa;
            qa.id = get_string(field(qs[q], "id", qp), qp + ".id");
            qa.query_tokens = get_tokens(field(qs[q], "query_tokens", qp), qp + ".query_tokens");
            const json& enr = field(qs[q], "enriched_tokens", qp);
            if (!enr.is_null()) qa.enriched_tokens = get_tokens(enr, qp + ".enriched_tokens");
            qa.target = parse_target(field(qs[q], "target", qp), qp + ".target");
            s.queries.push_back(std::move(qa));
        }
        validate(s);
        return s;
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    }
}

std::string to_jsonl_line(const GroundingSample& s) {
    json feats = json::array();
    for (std::size_t r = 0; r < s.features.rows; ++r) {
        auto row = s.features.row(r);
        feats.push_back(std::vector<double>(row.begin(), row.end()));
    }
    json qs = json::array();
    for (const auto& q : s.queries) {
        json jq = {{"id", q.id}, {"query_tokens", q.query_tokens}};
        jq["enriched_tokens"] = q.enriched_tokens ? json(*q.enriched_tokens) : json(nullptr);
        jq["target"] = target_to_json(q.target);
        qs.push_back(std::move(jq));
    }
    json j = {{"video_id", s.video_id},
              {"duration", s.duration_seconds},
              {"task", to_string(s.task)},
              {"features", std::move(feats)},
              {"queries", std::move(qs)}};
    return j.dump() + "\n";
}

std::vector<GroundingSample> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open sample file " + path.string());
    std::vector<GroundingSample> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_jsonl_line(line, n));
        } catch (const DataError& e) {
            throw DataError(path.string() + ": " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::vector<GroundingSample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write sample file " + path.string());
    for (const auto& s : samples) out << to_jsonl_line(s);
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace edvtg
