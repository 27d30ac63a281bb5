// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edvtg/interval.hpp"

namespace edvtg {

enum class Task { stg, vpg, qg, ag };

std::string to_string(Task t);
/// Throws std::invalid_argument for unknown names.
Task parse_task(std::string_view name);

/// Reserved token ids. The first six are fixed by the file format; the
/// separator and per-task prefix tokens follow.
namespace tok {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int interval = 3;
inline constexpr int point = 4;
inline constexpr int not_groundable = 5;
inline constexpr int sep = 6;
inline constexpr int task_stg = 7;
inline constexpr int task_vpg = 8;
inline constexpr int task_qg = 9;
inline constexpr int task_ag = 10;
inline constexpr int first_content = 11;

inline bool is_grounding_special(int id) { return id == interval || id == point || id == not_groundable; }
inline bool is_decoded_special(int id) { return id == interval || id == point; }
int task_prefix(Task t);
}  // namespace tok

/// Raised for malformed input files; the message carries a line number and
/// a field path such as `queries[0].target.end`.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Vocabulary {
public:
    /// Just the reserved tokens.
    Vocabulary();

    static Vocabulary read(const std::filesystem::path& path);
    /// Checks the reserved prefix and duplicates like read().
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);
    void write(const std::filesystem::path& path) const;

    int add(const std::string& token);
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int id) const;
    std::optional<int> find(std::string_view token) const;

    /// Whitespace-separated words to ids; unknown words throw DataError.
    std::vector<int> tokenize(std::string_view text) const;
    std::string detokenize(std::span<const int> ids) const;

    friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

private:
    std::vector<std::string> tokens_;
};

/// Row-major R x D matrix of per-token video features.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct NoTarget {
    friend bool operator==(const NoTarget&, const NoTarget&) = default;
};
using QueryTarget = std::variant<NoTarget, TemporalInterval, PointAnnotation>;

struct QueryAnnotation {
    std::string id;
    std::vector<int> query_tokens;
    std::optional<std::vector<int>> enriched_tokens;
    QueryTarget target;

    bool groundable() const { return !std::holds_alternative<NoTarget>(target); }
    friend bool operator==(const QueryAnnotation&, const QueryAnnotation&) = default;
};

struct GroundingSample {
    std::string video_id;
    double duration_seconds = 1.0;
    FeatureMatrix features;
    Task task = Task::stg;
    std::vector<QueryAnnotation> queries;

    friend bool operator==(const GroundingSample&, const GroundingSample&) = default;
};

/// Checks every invariant of a sample; throws DataError naming the field.
void validate(const GroundingSample& s);

std::vector<GroundingSample> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::vector<GroundingSample>& samples, const std::filesystem::path& path);
/// One JSON object per sample, newline-terminated.
std::string to_jsonl_line(const GroundingSample& s);
GroundingSample parse_jsonl_line(std::string_view line, std::size_t line_number);

struct GeneratorSpec {
    std::size_t n_samples = 64;
    Task task = Task::stg;
    int n_event_types = 8;
    std::size_t num_tokens = 16;   // R
    std::size_t feature_dim = 16;  // D_v
    double ambiguity_rate = 0.0;
    double corruption_rate = 0.0;
    double point_rate = 0.0;
    double negative_rate = 0.0;
    std::uint64_t seed = 42;
    /// Seeds the event prototypes shared by every split drawn from this world.
    std::uint64_t world_seed = 1234;
    double noise_std = 0.15;
    std::size_t min_run = 2;
    std::size_t max_run = 5;
    std::size_t min_queries = 2;  // vpg / ag
    std::size_t max_queries = 3;

    void validate() const;
};

/// Generator-side facts that the sample file does not carry.
struct QueryTrace {
    bool ambiguous = false;
    bool corrupted = false;
    bool negative = false;
    int target_prototype = -1;
};

/// The fixed world shared by all splits with the same world_seed and shape.
struct SyntheticWorld {
    int n_event_types = 0;
    std::size_t feature_dim = 0;
    /// n_event_types event prototypes followed by two cue prototypes, unit norm.
    std::vector<std::vector<double>> prototypes;
    Vocabulary vocab;

    int n_classes() const { return n_event_types / 2; }
    int coarse_token(int cls) const;
    int fine_token(int prototype) const;
    /// Prototypes a content token refers to: both siblings for a coarse
    /// token, one prototype for a fine token.
    std::vector<int> referents(int token) const;
};

SyntheticWorld make_world(const GeneratorSpec& spec);

struct SyntheticData {
    SyntheticWorld world;
    std::vector<GroundingSample> samples;
    std::vector<std::vector<QueryTrace>> traces;  // parallel to samples/queries
};

/// Deterministic in the spec. Throws std::invalid_argument when the spec is
/// invalid or the video is too short to host the requested events.
SyntheticData generate_synthetic(const GeneratorSpec& spec);

}  // namespace edvtg
