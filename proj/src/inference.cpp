// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "edvtg/inference.hpp"

namespace edvtg {

EvalMode parse_eval_mode(std::string_view name) {
    if (name == "enrich-detect") return EvalMode::enrich_detect;
    if (name == "direct-only") return EvalMode::direct_only;
    throw std::invalid_argument("unknown eval mode '" + std::string(name) + "' (expected enrich-detect or direct-only)");
}

std::string to_string(EvalMode m) { return m == EvalMode::enrich_detect ? "enrich-detect" : "direct-only"; }

namespace {

// Generated ids can fall in model vocabulary slots the word list never named.
std::string render_text(const Vocabulary& vocab, const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (!out.empty()) out += ' ';
        out += id >= 0 && static_cast<std::size_t>(id) < vocab.size() ? vocab.token(id) : "<unk" + std::to_string(id) + ">";
    }
    return out;
}

std::vector<PredictionRecord> predict_direct(const GroundingModel& model, const GroundingSample& s) {
    ad::NoGradGuard no_grad;
    std::vector<int> text;
    for (const auto& q : s.queries) {
        text.insert(text.end(), q.query_tokens.begin(), q.query_tokens.end());
        text.push_back(tok::interval);
    }
    const ModelInput in = ModelInput::from_sample(s);
    const TextLayout layout = build_layout(in, text);
    const ForwardOutput out = model.forward_teacher_forced(in, text);
    const auto V = static_cast<std::size_t>(model.config().vocab_size);

    std::vector<PredictionRecord> recs;
    for (std::size_t k = 0; k < s.queries.size(); ++k) {
        const auto row = out.lm_logits.data().subspan(layout.decision_positions[k] * V, V);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        PredictionRecord r;
        r.video_id = s.video_id;
        r.query_id = s.queries[k].id;
        r.confidence = (std::exp(row[tok::interval] - mx) + std::exp(row[tok::point] - mx)) / z;
        r.groundable = s.task != Task::ag || row[tok::not_groundable] < std::max(row[tok::interval], row[tok::point]);
        if (r.groundable) r.interval = to_start_end(out.predicted_intervals[k]);
        recs.push_back(std::move(r));
    }
    return recs;
}

}  // namespace

std::vector<PredictionRecord> predict(const GroundingModel& model, const GroundingSample& s, const PredictOptions& opts) {
    if (opts.mode == EvalMode::direct_only) return predict_direct(model, s);
    const std::size_t budget = opts.max_new_tokens ? opts.max_new_tokens
                                                   : static_cast<std::size_t>(model.config().max_text_tokens);
    const GenerationResult g = model.generate(ModelInput::from_sample(s), budget);
    std::vector<PredictionRecord> recs;
    for (std::size_t k = 0; k < s.queries.size(); ++k) {
        const QueryPrediction& q = g.queries[k];
        PredictionRecord r;
        r.video_id = s.video_id;
        r.query_id = s.queries[k].id;
        r.no_emission = !q.emitted;
        r.groundable = q.emitted && q.groundable;
        r.confidence = std::clamp(q.confidence, 0.0, 1.0);
        if (r.groundable && q.cw) {
            r.interval = to_start_end(*q.cw);
            if (q.special == tok::point) r.interval = TemporalInterval{q.cw->center, q.cw->center};
        }
        if (opts.vocab && q.emitted) r.enriched_text = render_text(*opts.vocab, q.enriched_tokens);
        recs.push_back(std::move(r));
    }
    return recs;
}

std::vector<PredictionRecord> predict(const GroundingModel& model, const std::vector<GroundingSample>& samples,
                                      const PredictOptions& opts) {
    std::vector<PredictionRecord> out;
    for (const auto& s : samples) {
        auto r = predict(model, s, opts);
        out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    return out;
}

}  // namespace edvtg
