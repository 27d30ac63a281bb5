// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Branch-selecting training loop. For every sample the direct and enriched
// target texts are teacher-forced, and only the branch with the smaller
// grounding loss is backpropagated. Multi-query samples draw random subsets of
// enriched queries instead, with pass 0 fixed to all-direct.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "edvtg/model.hpp"
#include "edvtg/objectives.hpp"

namespace edvtg {

enum class TrainMode { mil, direct, enriched };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 8;
    std::size_t epochs = 1;
    std::size_t max_steps = 0;  // 0: no cap
    double peak_lr = 5e-5;
    double start_lr = 1e-5;
    double end_lr = 1e-6;
    double warmup_fraction = 0.2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;
    double weight_decay = 0.05;
    int vpg_mil_passes = 4;
    LossWeights loss;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::mil;
    /// Fraction of skipped samples in an epoch above which training aborts.
    double max_skip_fraction = 0.1;

    void validate() const;

    static TrainConfig paper();
    /// Same schedule shape with learning rates sized for training from scratch.
    static TrainConfig toy();
};

/// Total optimizer steps for a dataset of n samples.
std::size_t total_steps(std::size_t n, const TrainConfig& cfg);

double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg);

class AdamW {
public:
    AdamW() = default;
    explicit AdamW(const std::vector<NamedTensor>& params);

    /// Returns false, leaving everything untouched, when any gradient is not finite.
    bool step(std::vector<NamedTensor>& params, double lr, const TrainConfig& cfg);

    std::uint64_t steps_taken() const { return t_; }
    const std::vector<std::vector<double>>& first_moment() const { return m_; }
    const std::vector<std::vector<double>>& second_moment() const { return v_; }
    void restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

private:
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// One teacher-forced candidate.
struct BranchResult {
    std::string label;  // "direct", "enriched" or "pass<k>"
    int index = 0;
    std::vector<bool> enriched;  // per query
    double lm_loss = 0.0;
    double grnd_loss = 0.0;  // weighted, mean over groundable queries
    double l1 = 0.0;
    double giou_term = 0.0;
    std::vector<CenterWidth> predicted;
};

/// Strict comparison; ties go to enriched.
bool select_enriched(double direct_grnd, double enriched_grnd);
/// First index of the smallest loss.
std::size_t select_pass(std::span<const double> grnd_losses);

struct StepOutcome {
    bool skipped = false;
    std::string skip_reason;
    BranchResult selected;
    std::vector<double> branch_grnd;  // every candidate's grounding loss, by index
    LossBreakdown loss;
};

/// Target text with the chosen queries enriched.
std::vector<int> target_text(const GroundingSample& s, const std::vector<bool>& enriched);

/// Evaluates one candidate and keeps its graph for backward.
struct BranchGraph {
    BranchResult result;
    ad::Tensor total;
};
BranchGraph run_branch(const GroundingModel& model, const GroundingSample& s, const std::vector<bool>& enriched,
                       const LossWeights& w);

/// Candidate enrichment masks for a sample under the configured mode.
std::vector<std::vector<bool>> candidate_masks(const GroundingSample& s, const TrainConfig& cfg, std::mt19937_64& rng);

/// Runs every candidate, picks one and accumulates grad_scale * its total
/// loss into the parameter gradients.
StepOutcome mil_step(const GroundingModel& model, const GroundingSample& s, const TrainConfig& cfg,
                     std::mt19937_64& rng, double grad_scale);

struct StepEvent {
    std::size_t step = 0;
    std::size_t total_steps = 0;
    std::size_t epoch = 0;
    std::size_t sample_index = 0;
    const StepOutcome* outcome = nullptr;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;  // steps completed after this epoch
    double lr = 0.0;       // at the last step of the epoch
    double lm = 0.0;
    double l1 = 0.0;
    double giou_term = 0.0;
    double grnd = 0.0;
    double total = 0.0;
    double frac_enriched = 0.0;  // selected branches with every available enrichment used
    double frac_direct = 0.0;    // selected branches with no enrichment used
    double train_miou = 0.0;     // teacher-forced, selected branch
    std::size_t samples = 0;
    std::size_t skipped = 0;
    std::size_t violations = 0;
    std::size_t aborted_steps = 0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t steps = 0;
    std::size_t violations = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    /// Receives report.jsonl and checkpoints when set.
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::filesystem::path> resume_from;
    std::vector<std::string> vocab_tokens;
    std::function<void(const StepEvent&)> observer;
    std::ostream* log = nullptr;
};

TrainReport train(GroundingModel& model, const std::vector<GroundingSample>& data, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

}  // namespace edvtg
