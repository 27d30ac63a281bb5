// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// The enrich-and-detect network.
//
// A causal transformer reads [video tokens | task prefix | queries | <BOS>]
// and continues with the (possibly enriched) query text. Each emitted
// <INT>/<PNT> token's final hidden state h is projected by G and decoded,
// together with the video tokens, into a (center, width) pair:
//
//   (c, w) = sigmoid(MLP(Decoder([G(h) | P(T_V)])[0]))

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edvtg/autodiff.hpp"
#include "edvtg/dataset.hpp"
#include "edvtg/interval.hpp"

namespace edvtg {

struct ModelConfig {
    int vocab_size = 64;
    int model_dim = 64;
    int n_heads = 4;
    int n_layers = 2;
    int ffn_dim = 256;
    int video_feature_dim = 16;
    int max_video_tokens = 16;
    int max_text_tokens = 32;
    int decoder_layers = 2;
    int decoder_heads = 4;
    int decoder_hidden = 64;
    int decoder_ffn_dim = 256;
    /// Starts at decoder_hidden and ends at 2 (center, width).
    std::vector<int> decoder_mlp_dims{64, 32, 16, 2};
    bool zero_init_decoder_head = true;
    std::uint64_t seed = 7;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    /// Desk-scale default: the paper's decoder layout at 1/12 width.
    static ModelConfig toy();
    /// Interval decoder at published width (2 layers, 12 heads, 768-256-128-2).
    static ModelConfig paper_decoder();

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
    std::string name;
    ad::Tensor tensor;
    /// Whether AdamW weight decay applies (matrices only).
    bool decay = false;
};

/// What the model reads for one sample.
struct ModelInput {
    const FeatureMatrix* features = nullptr;
    Task task = Task::stg;
    std::vector<std::vector<int>> queries;

    static ModelInput from_sample(const GroundingSample& s);
};

/// Token layout of one teacher-forced or generated sequence.
struct TextLayout {
    std::vector<int> input_ids;
    /// Next-token target per input position; -1 where no loss applies.
    std::vector<int> targets;
    /// Input positions holding <INT>/<PNT>, in order.
    std::vector<std::size_t> decoded_positions;
    /// Input positions whose next token is the per-query special token.
    std::vector<std::size_t> decision_positions;
    std::size_t bos_position = 0;
};

TextLayout build_layout(const ModelInput& in, const std::vector<int>& target_text);

struct ForwardOutput {
    /// One row per text position (video prefix excluded).
    ad::Tensor lm_logits;
    std::vector<int> lm_targets;
    std::vector<ad::Tensor> int_hidden_states;
    /// Post-sigmoid (center, width), shape (1, 2), one per decoded special.
    std::vector<ad::Tensor> interval_outputs;
    std::vector<CenterWidth> predicted_intervals;
    std::vector<int> decoded_kinds;
    /// logit(<INT>) - logit(<NOGRND>) at each decision position.
    std::vector<double> groundability_logits;
};

/// Per-query result of greedy generation.
struct QueryPrediction {
    bool emitted = false;  // false: budget ran out before this query's special token
    bool groundable = false;
    int special = -1;
    std::optional<CenterWidth> cw;
    /// Probability mass of <INT> and <PNT> at the decision step.
    double confidence = 0.0;
    std::vector<int> enriched_tokens;
};

struct GenerationResult {
    std::vector<int> generated;
    bool hit_eos = false;
    std::vector<QueryPrediction> queries;
    ForwardOutput output;
};

class GroundingModel {
public:
    explicit GroundingModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<NamedTensor>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    ad::Tensor& parameter(const std::string& name);
    void zero_grad();

    /// Video tokens T_V: projected features plus positions, shape (R, model_dim).
    ad::Tensor video_tokens(const FeatureMatrix& features) const;

    /// [T_V | embedded text] with positions, shape (R + T, model_dim).
    ad::Tensor encode_inputs(const FeatureMatrix& features, const std::vector<int>& text_ids) const;

    ForwardOutput forward_teacher_forced(const ModelInput& in, const std::vector<int>& target_text) const;

    /// Decodes one h_int of shape (1, model_dim) against T_V.
    ad::Tensor decode_interval(const ad::Tensor& h_int, const ad::Tensor& video_tokens) const;

    GenerationResult generate(const ModelInput& in, std::size_t max_new_tokens) const;

    /// Copies parameter values; shapes and names must match.
    void load_values(const std::vector<std::pair<std::string, std::vector<double>>>& values);

private:
    struct Block {
        ad::Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    ad::Tensor run_block(const Block& b, const ad::Tensor& x, int heads, const ad::Tensor* mask) const;
    ForwardOutput run(const FeatureMatrix& features, const TextLayout& layout, bool decode) const;
    void check_features(const FeatureMatrix& f) const;

    ad::Tensor& add_param(const std::string& name, ad::Shape shape, bool decay);
    Block make_block(const std::string& prefix, int dim, int ffn);

    ModelConfig cfg_;
    std::vector<NamedTensor> params_;

    ad::Tensor tok_emb_, pos_emb_, video_w_, video_b_;
    std::vector<Block> blocks_;
    ad::Tensor lnf_g_, lnf_b_, lm_w_, lm_b_;
    ad::Tensor g_w_, g_b_, dec_video_w_, dec_video_b_;
    std::vector<Block> dec_blocks_;
    ad::Tensor dec_ln_g_, dec_ln_b_;
    std::vector<ad::Tensor> mlp_w_, mlp_b_;
};

}  // namespace edvtg
