// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "edvtg/checkpoint.hpp"
#include "edvtg/config.hpp"
#include "edvtg/trainer.hpp"

namespace edvtg {

using ad::Tensor;

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::mil: return "mil";
        case TrainMode::direct: return "direct";
        case TrainMode::enriched: return "enriched";
    }
    return "?";
}

TrainMode parse_train_mode(std::string_view name) {
    if (name == "mil") return TrainMode::mil;
    if (name == "direct") return TrainMode::direct;
    if (name == "enriched") return TrainMode::enriched;
    throw std::invalid_argument("unknown train mode '" + std::string(name) + "' (expected mil, direct or enriched)");
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument(msg);
    };
    require(batch_size >= 1, "train.batch_size must be at least 1");
    require(epochs >= 1, "train.epochs must be at least 1");
    require(start_lr >= 0.0 && end_lr >= 0.0 && peak_lr > 0.0, "learning rates must be non-negative, peak positive");
    require(start_lr <= peak_lr, "train.start_lr must not exceed train.peak_lr");
    require(end_lr <= peak_lr, "train.end_lr must not exceed train.peak_lr");
    require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "train.warmup_fraction must lie in [0, 1]");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1 must lie in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2 must lie in [0, 1)");
    require(adam_eps > 0.0, "train.adam_eps must be positive");
    require(weight_decay >= 0.0, "train.weight_decay must be non-negative");
    require(vpg_mil_passes >= 1, "train.vpg_mil_passes must be at least 1");
    require(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0, "train.max_skip_fraction must lie in [0, 1]");
    loss.validate();
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
    TrainConfig c;
    c.peak_lr = 2e-3;
    c.start_lr = 2e-4;
    c.end_lr = 2e-5;
    c.weight_decay = 0.01;
    return c;
}

std::size_t total_steps(std::size_t n, const TrainConfig& cfg) {
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t all = per_epoch * cfg.epochs;
    return cfg.max_steps ? std::min(all, cfg.max_steps) : all;
}

double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg) {
    if (total == 0) return cfg.peak_lr;
    const auto warmup = static_cast<std::size_t>(std::floor(cfg.warmup_fraction * static_cast<double>(total)));
    if (step < warmup) {
        return cfg.start_lr + (cfg.peak_lr - cfg.start_lr) * static_cast<double>(step) / static_cast<double>(warmup);
    }
    const std::size_t last = total - 1;
    if (last <= warmup) return cfg.peak_lr;
    const double p = static_cast<double>(std::min(step, last) - warmup) / static_cast<double>(last - warmup);
    // two halves so both anchors come out exact
    const double drop = 0.5 * (1.0 - std::cos(std::numbers::pi * p));
    if (p <= 0.5) return cfg.peak_lr - (cfg.peak_lr - cfg.end_lr) * drop;
    return cfg.end_lr + (cfg.peak_lr - cfg.end_lr) * (1.0 - drop);
}

AdamW::AdamW(const std::vector<NamedTensor>& params) {
    for (const auto& p : params) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("optimizer state size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
            throw std::invalid_argument("optimizer state shape mismatch at parameter " + std::to_string(i));
        }
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

bool AdamW::step(std::vector<NamedTensor>& params, double lr, const TrainConfig& cfg) {
    if (params.size() != m_.size()) throw std::invalid_argument("optimizer built for a different parameter list");
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad())
            if (!std::isfinite(g)) return false;
    }
    ++t_;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto value = t.mutable_data();
        const std::vector<double> grad = t.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        const double decay = params[i].decay ? 1.0 - lr * cfg.weight_decay : 1.0;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = grad[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            value[k] = value[k] * decay - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
    return true;
}

bool select_enriched(double direct_grnd, double enriched_grnd) { return !(direct_grnd < enriched_grnd); }

std::size_t select_pass(std::span<const double> grnd_losses) {
    if (grnd_losses.empty()) throw std::invalid_argument("select_pass: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < grnd_losses.size(); ++i)
        if (grnd_losses[i] < grnd_losses[best]) best = i;
    return best;
}

std::vector<int> target_text(const GroundingSample& s, const std::vector<bool>& enriched) {
    if (enriched.size() != s.queries.size()) throw std::invalid_argument("enrichment mask size != query count");
    std::vector<int> out;
    for (std::size_t q = 0; q < s.queries.size(); ++q) {
        const auto& qa = s.queries[q];
        const auto& words = enriched[q] && qa.enriched_tokens ? *qa.enriched_tokens : qa.query_tokens;
        out.insert(out.end(), words.begin(), words.end());
        if (std::holds_alternative<TemporalInterval>(qa.target)) {
            out.push_back(tok::interval);
        } else if (std::holds_alternative<PointAnnotation>(qa.target)) {
            out.push_back(tok::point);
        } else {
            out.push_back(tok::not_groundable);
        }
    }
    return out;
}

BranchGraph run_branch(const GroundingModel& model, const GroundingSample& s, const std::vector<bool>& enriched,
                       const LossWeights& w) {
    const ModelInput in = ModelInput::from_sample(s);
    const ForwardOutput out = model.forward_teacher_forced(in, target_text(s, enriched));
    const Tensor lm = lm_loss(out.lm_logits, out.lm_targets);

    BranchGraph g;
    g.result.enriched = enriched;
    g.result.lm_loss = lm.item();
    g.result.predicted = out.predicted_intervals;
    Tensor l1_sum, giou_sum;
    std::size_t k = 0;
    for (const auto& qa : s.queries) {
        if (!qa.groundable()) continue;
        const auto terms = grounding_terms(out.interval_outputs.at(k++), qa.target);
        l1_sum = l1_sum.defined() ? ad::add(l1_sum, terms.l1) : terms.l1;
        giou_sum = giou_sum.defined() ? ad::add(giou_sum, terms.giou_term) : terms.giou_term;
    }
    g.total = ad::scale(lm, w.lambda_lm);
    if (k > 0) {
        const double inv = 1.0 / static_cast<double>(k);
        const Tensor l1 = ad::scale(l1_sum, inv);
        const Tensor gi = ad::scale(giou_sum, inv);
        const Tensor grnd = ad::add(ad::scale(l1, w.lambda_l1), ad::scale(gi, w.lambda_giou));
        g.result.l1 = l1.item();
        g.result.giou_term = gi.item();
        g.result.grnd_loss = grnd.item();
        g.total = ad::add(g.total, grnd);
    }
    return g;
}

std::vector<std::vector<bool>> candidate_masks(const GroundingSample& s, const TrainConfig& cfg, std::mt19937_64& rng) {
    const std::size_t n = s.queries.size();
    std::vector<bool> avail(n, false);
    std::vector<std::size_t> avail_idx;
    for (std::size_t q = 0; q < n; ++q) {
        if (s.queries[q].enriched_tokens) {
            avail[q] = true;
            avail_idx.push_back(q);
        }
    }
    const std::vector<bool> none(n, false);
    switch (cfg.mode) {
        case TrainMode::direct: return {none};
        case TrainMode::enriched: return {avail};
        case TrainMode::mil: break;
    }
    if (avail_idx.empty()) return {none};
    if (n == 1) return {none, avail};
    std::vector<std::vector<bool>> masks{none};
    for (int p = 1; p < cfg.vpg_mil_passes; ++p) {
        const std::size_t k = std::uniform_int_distribution<std::size_t>(0, avail_idx.size())(rng);
        auto order = avail_idx;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> m(n, false);
        for (std::size_t i = 0; i < k; ++i) m[order[i]] = true;
        masks.push_back(std::move(m));
    }
    return masks;
}

StepOutcome mil_step(const GroundingModel& model, const GroundingSample& s, const TrainConfig& cfg,
                     std::mt19937_64& rng, double grad_scale) {
    const auto masks = candidate_masks(s, cfg, rng);
    const bool pairwise = cfg.mode == TrainMode::mil && s.queries.size() == 1 && masks.size() == 2;

    StepOutcome o;
    std::vector<BranchGraph> graphs;
    std::vector<std::vector<int>> texts;
    try {
        for (std::size_t i = 0; i < masks.size(); ++i) {
            auto text = target_text(s, masks[i]);
            auto dup = std::find(texts.begin(), texts.end(), text);
            BranchGraph g = dup != texts.end() ? graphs[static_cast<std::size_t>(dup - texts.begin())]
                                               : run_branch(model, s, masks[i], cfg.loss);
            g.result.enriched = masks[i];
            g.result.index = static_cast<int>(i);
            if (pairwise) {
                g.result.label = i == 0 ? "direct" : "enriched";
            } else if (cfg.mode != TrainMode::mil) {
                g.result.label = to_string(cfg.mode);
            } else {
                g.result.label = "pass" + std::to_string(i);
            }
            if (!std::isfinite(g.result.grnd_loss) || !std::isfinite(g.result.lm_loss)) {
                o.skipped = true;
                o.skip_reason = "non-finite loss in branch " + g.result.label;
                return o;
            }
            o.branch_grnd.push_back(g.result.grnd_loss);
            texts.push_back(std::move(text));
            graphs.push_back(std::move(g));
        }
    } catch (const std::exception& e) {
        o.skipped = true;
        o.skip_reason = e.what();
        return o;
    }

    std::size_t pick = 0;
    if (pairwise) {
        pick = select_enriched(o.branch_grnd[0], o.branch_grnd[1]) ? 1 : 0;
    } else {
        pick = select_pass(o.branch_grnd);
    }
    BranchGraph& chosen = graphs[pick];
    try {
        o.loss = combined_loss(chosen.result.lm_loss, chosen.result.l1, chosen.result.giou_term, cfg.loss);
    } catch (const NonFiniteLoss& e) {
        o.skipped = true;
        o.skip_reason = e.what();
        return o;
    }
    o.selected = chosen.result;
    ad::backward(ad::scale(chosen.total, grad_scale));
    return o;
}

namespace {

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                      static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(c),
                      static_cast<std::uint32_t>(c >> 32)};
    return std::mt19937_64(seq);
}

nlohmann::json epoch_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"step", r.step},
            {"lr", r.lr},
            {"lm", r.lm},
            {"l1", r.l1},
            {"giou_term", r.giou_term},
            {"grnd", r.grnd},
            {"total", r.total},
            {"frac_enriched", r.frac_enriched},
            {"frac_direct", r.frac_direct},
            {"train_miou", r.train_miou},
            {"samples", r.samples},
            {"skipped", r.skipped},
            {"violations", r.violations},
            {"aborted_steps", r.aborted_steps}};
}

Checkpoint snapshot(const GroundingModel& model, const TrainConfig& cfg, const TrainOptions& opts, const AdamW& adam,
                    std::size_t step, std::size_t epoch) {
    Checkpoint c = Checkpoint::capture(model);
    c.train_config = to_json(cfg);
    c.train_config["loss"] = to_json(cfg.loss);
    c.vocab = opts.vocab_tokens;
    c.seed = cfg.seed;
    c.step = step;
    c.epoch = epoch;
    c.has_optimizer = true;
    c.adam_t = adam.steps_taken();
    c.adam_m = adam.first_moment();
    c.adam_v = adam.second_moment();
    return c;
}

}  // namespace

TrainReport train(GroundingModel& model, const std::vector<GroundingSample>& data, const TrainConfig& cfg,
                  const TrainOptions& opts) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("training set is empty");
    std::vector<NamedTensor> params = model.parameters();
    AdamW adam(params);
    std::size_t step = 0;
    std::size_t first_epoch = 0;

    if (opts.resume_from) {
        const Checkpoint c = read_checkpoint(*opts.resume_from);
        if (!(c.model == model.config())) {
            throw CheckpointError(opts.resume_from->string() + ": model config differs from the run config");
        }
        std::vector<std::pair<std::string, std::vector<double>>> values;
        for (const auto& p : c.params) values.emplace_back(p.name, p.values);
        model.load_values(values);
        if (c.has_optimizer) adam.restore(c.adam_t, c.adam_m, c.adam_v);
        step = c.step;
        first_epoch = c.epoch;
    }

    std::ofstream report_out;
    if (opts.out_dir) {
        std::filesystem::create_directories(*opts.out_dir);
        const auto path = *opts.out_dir / "report.jsonl";
        report_out.open(path, opts.resume_from ? std::ios::app : std::ios::trunc);
        if (!report_out) throw std::runtime_error("cannot write training report " + path.string());
    }

    const std::size_t total = total_steps(data.size(), cfg);
    TrainReport report;
    report.steps = step;
    for (std::size_t epoch = first_epoch; epoch < cfg.epochs && step < total; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_rng = seeded(cfg.seed, 0x5eed5eedULL, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        double iou_sum = 0.0;
        std::size_t iou_n = 0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < order.size() && step < total; b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(end - b);
            const double lr = lr_at(step, total, cfg);
            model.zero_grad();
            for (std::size_t pos = b; pos < end; ++pos) {
                const std::size_t idx = order[pos];
                auto rng = seeded(cfg.seed, step, pos - b);
                const StepOutcome o = mil_step(model, data[idx], cfg, rng, scale);
                ++rec.samples;
                if (o.skipped) {
                    ++rec.skipped;
                    if (opts.log) *opts.log << "skipped sample " << data[idx].video_id << ": " << o.skip_reason << "\n";
                } else {
                    ++used;
                    const double best = *std::min_element(o.branch_grnd.begin(), o.branch_grnd.end());
                    if (o.selected.grnd_loss != best) ++rec.violations;
                    rec.lm += o.loss.lm;
                    rec.l1 += o.loss.l1;
                    rec.giou_term += o.loss.giou_term;
                    rec.grnd += o.selected.grnd_loss;
                    rec.total += o.loss.total;
                    bool any = false;
                    bool all = true;
                    for (std::size_t q = 0; q < data[idx].queries.size(); ++q) {
                        if (!data[idx].queries[q].enriched_tokens) continue;
                        any = any || o.selected.enriched[q];
                        all = all && o.selected.enriched[q];
                    }
                    const bool has_enrichment = std::any_of(data[idx].queries.begin(), data[idx].queries.end(),
                                                            [](const auto& q) { return q.enriched_tokens.has_value(); });
                    if (!any) rec.frac_direct += 1.0;
                    if (has_enrichment && all) rec.frac_enriched += 1.0;
                    std::size_t k = 0;
                    for (const auto& qa : data[idx].queries) {
                        if (!qa.groundable()) continue;
                        const auto& cw = o.selected.predicted.at(k++);
                        if (const auto* iv = std::get_if<TemporalInterval>(&qa.target)) {
                            iou_sum += iou(to_start_end(cw), *iv);
                            ++iou_n;
                        }
                    }
                }
                if (opts.observer) opts.observer({step, total, epoch, idx, &o});
            }
            if (!adam.step(params, lr, cfg)) {
                ++rec.aborted_steps;
                if (opts.log) *opts.log << "step " << step << " aborted: non-finite gradient\n";
            }
            rec.lr = lr;
            ++step;
        }
        if (used) {
            const double inv = 1.0 / static_cast<double>(used);
            rec.lm *= inv;
            rec.l1 *= inv;
            rec.giou_term *= inv;
            rec.grnd *= inv;
            rec.total *= inv;
            rec.frac_direct *= inv;
            rec.frac_enriched *= inv;
        }
        rec.train_miou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
        rec.step = step;
        report.violations += rec.violations;
        report.epochs.push_back(rec);

        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (opts.log) {
            *opts.log << "epoch " << epoch << " step " << step << "/" << total << " lr " << rec.lr << " lm " << rec.lm
                      << " grnd " << rec.grnd << " train_miou " << rec.train_miou << " enriched " << rec.frac_enriched
                      << " direct " << rec.frac_direct << " (" << secs << " s)\n";
        }
        if (report_out) {
            report_out << epoch_json(rec).dump() << "\n";
            report_out.flush();
        }
        if (rec.samples && static_cast<double>(rec.skipped) > cfg.max_skip_fraction * static_cast<double>(rec.samples)) {
            throw TrainingDiverged("epoch " + std::to_string(epoch) + ": " + std::to_string(rec.skipped) + " of " +
                                   std::to_string(rec.samples) + " samples skipped for non-finite losses");
        }
        if (opts.out_dir) {
            write_checkpoint(snapshot(model, cfg, opts, adam, step, epoch + 1),
                             *opts.out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"));
        }
    }
    report.steps = step;
    if (opts.out_dir) {
        const std::size_t next_epoch = report.epochs.empty() ? first_epoch : report.epochs.back().epoch + 1;
        write_checkpoint(snapshot(model, cfg, opts, adam, step, next_epoch), *opts.out_dir / "final.ckpt");
    }
    return report;
}

}  // namespace edvtg
