// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "edvtg/model.hpp"

namespace edvtg {

using ad::Tensor;

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

constexpr double kPosScale = 0.3;

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::add(ad::matmul(x, w), b); }

// Additive attention mask: video rows see the whole video; text rows see the
// whole video and every earlier text position.
Tensor prefix_causal_mask(std::size_t R, std::size_t T) {
    const std::size_t L = R + T;
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> m(L * L, 0.0);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const bool visible = j < R || (i >= R && j <= i);
            if (!visible) m[i * L + j] = ninf;
        }
    return Tensor::from({L, L}, std::move(m));
}

}  // namespace

void ModelConfig::validate() const {
    require(vocab_size > tok::first_content, "model.vocab_size must exceed the reserved token count");
    require(model_dim > 0 && n_heads > 0 && model_dim % n_heads == 0, "model.model_dim must be divisible by model.n_heads");
    require(n_layers >= 1, "model.n_layers must be at least 1");
    require(ffn_dim > 0, "model.ffn_dim must be positive");
    require(video_feature_dim > 0, "model.video_feature_dim must be positive");
    require(max_video_tokens > 0, "model.max_video_tokens must be positive");
    require(max_text_tokens > 2, "model.max_text_tokens must be at least 3");
    require(decoder_layers >= 0, "model.decoder_layers must be non-negative");
    require(decoder_hidden > 0 && decoder_heads > 0 && decoder_hidden % decoder_heads == 0,
            "model.decoder_hidden must be divisible by model.decoder_heads");
    require(decoder_ffn_dim > 0, "model.decoder_ffn_dim must be positive");
    require(decoder_mlp_dims.size() >= 2, "model.decoder_mlp_dims needs at least an input and an output size");
    require(decoder_mlp_dims.front() == decoder_hidden, "model.decoder_mlp_dims must start at decoder_hidden");
    require(decoder_mlp_dims.back() == 2, "model.decoder_mlp_dims must end in 2 (center, width)");
    for (int d : decoder_mlp_dims) require(d > 0, "model.decoder_mlp_dims entries must be positive");
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_decoder() {
    ModelConfig c;
    c.decoder_layers = 2;
    c.decoder_heads = 12;
    c.decoder_hidden = 768;
    c.decoder_ffn_dim = 4 * 768;
    c.decoder_mlp_dims = {768, 256, 128, 2};
    return c;
}

ModelInput ModelInput::from_sample(const GroundingSample& s) {
    ModelInput in;
    in.features = &s.features;
    in.task = s.task;
    for (const auto& q : s.queries) in.queries.push_back(q.query_tokens);
    return in;
}

TextLayout build_layout(const ModelInput& in, const std::vector<int>& target_text) {
    if (in.queries.empty()) throw std::invalid_argument("model input has no query");
    TextLayout l;
    l.input_ids.push_back(tok::task_prefix(in.task));
    for (std::size_t q = 0; q < in.queries.size(); ++q) {
        if (in.queries[q].empty()) throw std::invalid_argument("query " + std::to_string(q) + " is empty");
        if (q) l.input_ids.push_back(tok::sep);
        l.input_ids.insert(l.input_ids.end(), in.queries[q].begin(), in.queries[q].end());
    }
    l.bos_position = l.input_ids.size();
    l.input_ids.push_back(tok::bos);
    l.input_ids.insert(l.input_ids.end(), target_text.begin(), target_text.end());

    l.targets.assign(l.input_ids.size(), -1);
    for (std::size_t j = 0; j < target_text.size(); ++j) l.targets[l.bos_position + j] = target_text[j];
    l.targets.back() = tok::eos;

    std::size_t specials = 0;
    for (std::size_t j = 0; j < target_text.size(); ++j) {
        const int t = target_text[j];
        if (tok::is_grounding_special(t)) {
            ++specials;
            l.decision_positions.push_back(l.bos_position + j);
        }
        if (tok::is_decoded_special(t)) l.decoded_positions.push_back(l.bos_position + 1 + j);
    }
    if (specials == 0) throw std::invalid_argument("target text contains no <INT>, <PNT> or <NOGRND> token");
    if (specials != in.queries.size()) {
        throw std::invalid_argument("target text has " + std::to_string(specials) + " special position tokens for " +
                                    std::to_string(in.queries.size()) + " queries");
    }
    return l;
}

GroundingModel::GroundingModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.model_dim);
    const auto H = static_cast<std::size_t>(cfg_.decoder_hidden);
    tok_emb_ = add_param("lm.tok_emb", {static_cast<std::size_t>(cfg_.vocab_size), d}, false);
    pos_emb_ = add_param("lm.pos_emb", {static_cast<std::size_t>(cfg_.max_video_tokens + cfg_.max_text_tokens), d}, false);
    video_w_ = add_param("lm.video_proj.w", {static_cast<std::size_t>(cfg_.video_feature_dim), d}, true);
    video_b_ = add_param("lm.video_proj.b", {d}, false);
    for (int i = 0; i < cfg_.n_layers; ++i)
        blocks_.push_back(make_block("lm.block" + std::to_string(i), cfg_.model_dim, cfg_.ffn_dim));
    lnf_g_ = add_param("lm.ln_f.g", {d}, false);
    lnf_b_ = add_param("lm.ln_f.b", {d}, false);
    lm_w_ = add_param("lm.head.w", {d, static_cast<std::size_t>(cfg_.vocab_size)}, true);
    lm_b_ = add_param("lm.head.b", {static_cast<std::size_t>(cfg_.vocab_size)}, false);

    g_w_ = add_param("dec.int_proj.w", {d, H}, true);
    g_b_ = add_param("dec.int_proj.b", {H}, false);
    dec_video_w_ = add_param("dec.video_proj.w", {d, H}, true);
    dec_video_b_ = add_param("dec.video_proj.b", {H}, false);
    for (int i = 0; i < cfg_.decoder_layers; ++i)
        dec_blocks_.push_back(make_block("dec.block" + std::to_string(i), cfg_.decoder_hidden, cfg_.decoder_ffn_dim));
    dec_ln_g_ = add_param("dec.ln.g", {H}, false);
    dec_ln_b_ = add_param("dec.ln.b", {H}, false);
    const auto& dims = cfg_.decoder_mlp_dims;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::string p = "dec.mlp" + std::to_string(i);
        mlp_w_.push_back(add_param(p + ".w", {static_cast<std::size_t>(dims[i]), static_cast<std::size_t>(dims[i + 1])}, true));
        mlp_b_.push_back(add_param(p + ".b", {static_cast<std::size_t>(dims[i + 1])}, false));
    }

    // initialization, in parameter order
    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& p : params_) {
        auto data = p.tensor.mutable_data();
        const auto& name = p.name;
        auto ends_with = [&](const char* s) {
            const std::string suf(s);
            return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
        };
        double stddev = 0.0;
        double fill = 0.0;
        if (name == "lm.tok_emb") {
            stddev = 0.5;
        } else if (name == "lm.pos_emb") {
            // sinusoidal start so position is linearly readable from step 0
            const std::size_t d = p.tensor.cols();
            for (std::size_t pos = 0; pos < p.tensor.rows(); ++pos)
                for (std::size_t i = 0; i < d; ++i) {
                    const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
                    const double a = static_cast<double>(pos) * freq;
                    data[pos * d + i] = kPosScale * (i % 2 ? std::cos(a) : std::sin(a));
                }
            continue;
        } else if (ends_with(".g")) {
            fill = 1.0;
        } else if (ends_with(".w") || ends_with(".wq") || ends_with(".wk") || ends_with(".wv") ||
                   ends_with(".wo") || ends_with(".w1") || ends_with(".w2")) {
            stddev = 1.0 / std::sqrt(static_cast<double>(p.tensor.shape()[0]));
        }
        for (auto& v : data) v = stddev > 0.0 ? stddev * gauss(rng) : fill;
    }
    if (cfg_.zero_init_decoder_head) {
        for (auto& v : mlp_w_.back().mutable_data()) v = 0.0;
        for (auto& v : mlp_b_.back().mutable_data()) v = 0.0;
    }
}

Tensor& GroundingModel::add_param(const std::string& name, ad::Shape shape, bool decay) {
    params_.push_back({name, Tensor::zeros(std::move(shape), true), decay});
    return params_.back().tensor;
}

GroundingModel::Block GroundingModel::make_block(const std::string& prefix, int dim, int ffn) {
    const auto d = static_cast<std::size_t>(dim);
    const auto f = static_cast<std::size_t>(ffn);
    Block b;
    b.ln1_g = add_param(prefix + ".ln1.g", {d}, false);
    b.ln1_b = add_param(prefix + ".ln1.b", {d}, false);
    b.wq = add_param(prefix + ".attn.wq", {d, d}, true);
    b.bq = add_param(prefix + ".attn.bq", {d}, false);
    b.wk = add_param(prefix + ".attn.wk", {d, d}, true);
    b.bk = add_param(prefix + ".attn.bk", {d}, false);
    b.wv = add_param(prefix + ".attn.wv", {d, d}, true);
    b.bv = add_param(prefix + ".attn.bv", {d}, false);
    b.wo = add_param(prefix + ".attn.wo", {d, d}, true);
    b.bo = add_param(prefix + ".attn.bo", {d}, false);
    b.ln2_g = add_param(prefix + ".ln2.g", {d}, false);
    b.ln2_b = add_param(prefix + ".ln2.b", {d}, false);
    b.w1 = add_param(prefix + ".ffn.w1", {d, f}, true);
    b.b1 = add_param(prefix + ".ffn.b1", {f}, false);
    b.w2 = add_param(prefix + ".ffn.w2", {f, d}, true);
    b.b2 = add_param(prefix + ".ffn.b2", {d}, false);
    return b;
}

std::size_t GroundingModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

Tensor& GroundingModel::parameter(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
}

void GroundingModel::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void GroundingModel::load_values(const std::vector<std::pair<std::string, std::vector<double>>>& values) {
    if (values.size() != params_.size()) {
        throw std::invalid_argument("parameter count mismatch: expected " + std::to_string(params_.size()) + ", got " +
                                    std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& p = params_[i];
        if (values[i].first != p.name) throw std::invalid_argument("parameter " + std::to_string(i) + " is " + p.name +
                                                                   ", got " + values[i].first);
        if (values[i].second.size() != p.tensor.numel()) {
            throw std::invalid_argument("parameter " + p.name + " expects " + std::to_string(p.tensor.numel()) +
                                        " values, got " + std::to_string(values[i].second.size()));
        }
        std::copy(values[i].second.begin(), values[i].second.end(), p.tensor.mutable_data().begin());
    }
}

void GroundingModel::check_features(const FeatureMatrix& f) const {
    if (f.rows == 0) throw std::invalid_argument("video has no feature tokens");
    if (f.rows > static_cast<std::size_t>(cfg_.max_video_tokens)) {
        throw std::invalid_argument("video has " + std::to_string(f.rows) + " tokens, above max_video_tokens=" +
                                    std::to_string(cfg_.max_video_tokens));
    }
    if (f.cols != static_cast<std::size_t>(cfg_.video_feature_dim)) {
        throw std::invalid_argument("video feature dim " + std::to_string(f.cols) + " != video_feature_dim=" +
                                    std::to_string(cfg_.video_feature_dim));
    }
}

Tensor GroundingModel::video_tokens(const FeatureMatrix& features) const {
    check_features(features);
    const Tensor feats = Tensor::from({features.rows, features.cols}, features.values);
    const Tensor pos = ad::slice(pos_emb_, 0, 0, features.rows);
    return ad::add(linear(feats, video_w_, video_b_), pos);
}

Tensor GroundingModel::encode_inputs(const FeatureMatrix& features, const std::vector<int>& text_ids) const {
    if (text_ids.empty()) throw std::invalid_argument("empty query: no text tokens to encode");
    if (text_ids.size() > static_cast<std::size_t>(cfg_.max_text_tokens)) {
        throw std::invalid_argument("text has " + std::to_string(text_ids.size()) + " tokens, above max_text_tokens=" +
                                    std::to_string(cfg_.max_text_tokens));
    }
    const Tensor tv = video_tokens(features);
    const auto base = static_cast<std::size_t>(cfg_.max_video_tokens);
    const Tensor text = ad::add(ad::embedding(tok_emb_, text_ids), ad::slice(pos_emb_, 0, base, base + text_ids.size()));
    return ad::concat({tv, text}, 0);
}

Tensor GroundingModel::run_block(const Block& b, const Tensor& x, int heads, const Tensor* mask) const {
    const std::size_t d = x.cols();
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor u = ad::layer_norm(x, b.ln1_g, b.ln1_b);
    const Tensor q = linear(u, b.wq, b.bq);
    const Tensor k = linear(u, b.wk, b.bk);
    const Tensor v = linear(u, b.wv, b.bv);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const Tensor qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
        Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
        if (mask) scores = ad::add(scores, *mask);
        outs.push_back(ad::matmul(ad::softmax(scores), vh));
    }
    const Tensor attn = heads == 1 ? outs[0] : ad::concat(outs, 1);
    const Tensor h1 = ad::add(x, linear(attn, b.wo, b.bo));
    const Tensor f = linear(ad::gelu(linear(ad::layer_norm(h1, b.ln2_g, b.ln2_b), b.w1, b.b1)), b.w2, b.b2);
    return ad::add(h1, f);
}

Tensor GroundingModel::decode_interval(const Tensor& h_int, const Tensor& video_tokens) const {
    if (h_int.dim() != 2 || h_int.rows() != 1 || h_int.cols() != static_cast<std::size_t>(cfg_.model_dim)) {
        throw ad::ShapeError("decode_interval", h_int.shape(), {1, static_cast<std::size_t>(cfg_.model_dim)});
    }
    const Tensor g = linear(h_int, g_w_, g_b_);
    const Tensor pv = linear(video_tokens, dec_video_w_, dec_video_b_);
    Tensor x = ad::concat({g, pv}, 0);
    for (const auto& b : dec_blocks_) x = run_block(b, x, cfg_.decoder_heads, nullptr);
    Tensor y = ad::layer_norm(ad::slice(x, 0, 0, 1), dec_ln_g_, dec_ln_b_);
    for (std::size_t i = 0; i < mlp_w_.size(); ++i) {
        y = linear(y, mlp_w_[i], mlp_b_[i]);
        if (i + 1 < mlp_w_.size()) y = ad::gelu(y);
    }
    return ad::sigmoid(y);
}

ForwardOutput GroundingModel::run(const FeatureMatrix& features, const TextLayout& layout, bool decode) const {
    const auto& ids = layout.input_ids;
    const std::size_t R = features.rows;
    const std::size_t T = ids.size();
    if (T > static_cast<std::size_t>(cfg_.max_text_tokens)) {
        throw std::invalid_argument("text has " + std::to_string(T) + " tokens, above max_text_tokens=" +
                                    std::to_string(cfg_.max_text_tokens));
    }
    const Tensor tv = video_tokens(features);
    const auto base = static_cast<std::size_t>(cfg_.max_video_tokens);
    const Tensor text = ad::add(ad::embedding(tok_emb_, ids), ad::slice(pos_emb_, 0, base, base + T));
    Tensor x = ad::concat({tv, text}, 0);
    const Tensor mask = prefix_causal_mask(R, T);
    for (const auto& b : blocks_) x = run_block(b, x, cfg_.n_heads, &mask);
    const Tensor h = ad::layer_norm(ad::slice(x, 0, R, R + T), lnf_g_, lnf_b_);

    ForwardOutput out;
    out.lm_logits = linear(h, lm_w_, lm_b_);
    out.lm_targets = layout.targets;
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    for (std::size_t p : layout.decision_positions) {
        const auto row = out.lm_logits.data().subspan(p * V, V);
        out.groundability_logits.push_back(row[tok::interval] - row[tok::not_groundable]);
    }
    if (decode) {
        for (std::size_t p : layout.decoded_positions) {
            Tensor h_int = ad::slice(h, 0, p, p + 1);
            Tensor cw = decode_interval(h_int, tv);
            out.predicted_intervals.push_back({cw[0], cw[1]});
            out.decoded_kinds.push_back(ids[p]);
            out.int_hidden_states.push_back(std::move(h_int));
            out.interval_outputs.push_back(std::move(cw));
        }
    }
    return out;
}

ForwardOutput GroundingModel::forward_teacher_forced(const ModelInput& in, const std::vector<int>& target_text) const {
    if (!in.features) throw std::invalid_argument("model input has no features");
    const TextLayout layout = build_layout(in, target_text);
    return run(*in.features, layout, true);
}

GenerationResult GroundingModel::generate(const ModelInput& in, std::size_t max_new_tokens) const {
    if (!in.features) throw std::invalid_argument("model input has no features");
    ad::NoGradGuard no_grad;
    TextLayout layout;
    layout.input_ids.push_back(tok::task_prefix(in.task));
    for (std::size_t q = 0; q < in.queries.size(); ++q) {
        if (in.queries[q].empty()) throw std::invalid_argument("query " + std::to_string(q) + " is empty");
        if (q) layout.input_ids.push_back(tok::sep);
        layout.input_ids.insert(layout.input_ids.end(), in.queries[q].begin(), in.queries[q].end());
    }
    layout.bos_position = layout.input_ids.size();
    layout.input_ids.push_back(tok::bos);

    GenerationResult res;
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const auto limit = static_cast<std::size_t>(cfg_.max_text_tokens);
    std::vector<double> confidences;
    std::vector<int> specials;
    std::vector<std::vector<int>> segments(1);
    for (std::size_t step = 0; step < max_new_tokens && layout.input_ids.size() < limit; ++step) {
        layout.targets.assign(layout.input_ids.size(), -1);
        const ForwardOutput o = run(*in.features, layout, false);
        const auto row = o.lm_logits.data().subspan((layout.input_ids.size() - 1) * V, V);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == tok::eos) {
            res.hit_eos = true;
            break;
        }
        res.generated.push_back(best);
        layout.input_ids.push_back(best);
        if (tok::is_grounding_special(best)) {
            const double mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double v : row) z += std::exp(v - mx);
            confidences.push_back((std::exp(row[tok::interval] - mx) + std::exp(row[tok::point] - mx)) / z);
            specials.push_back(best);
            segments.emplace_back();
        } else {
            segments.back().push_back(best);
        }
    }

    layout.targets.assign(layout.input_ids.size(), -1);
    layout.decoded_positions.clear();
    for (std::size_t p = layout.bos_position + 1; p < layout.input_ids.size(); ++p)
        if (tok::is_decoded_special(layout.input_ids[p])) layout.decoded_positions.push_back(p);
    res.output = run(*in.features, layout, true);

    std::size_t decoded = 0;
    for (std::size_t k = 0; k < in.queries.size(); ++k) {
        QueryPrediction qp;
        if (k < specials.size()) {
            qp.emitted = true;
            qp.special = specials[k];
            qp.confidence = confidences[k];
            qp.enriched_tokens = segments[k];
            qp.groundable = specials[k] != tok::not_groundable;
            if (qp.groundable) qp.cw = res.output.predicted_intervals[decoded++];
        }
        res.queries.push_back(std::move(qp));
    }
    return res;
}

}  // namespace edvtg
