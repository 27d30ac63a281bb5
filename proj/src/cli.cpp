// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "edvtg/checkpoint.hpp"
#include "edvtg/cli.hpp"
#include "edvtg/config.hpp"
#include "edvtg/inference.hpp"
#include "edvtg/metrics.hpp"
#include "edvtg/trainer.hpp"

namespace edvtg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Raised for checkpoint/data disagreements.
class Mismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides parse_overrides(const std::vector<std::string>& extras) {
    Overrides out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& a = extras[i];
        if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) {
            throw ConfigError("unexpected argument '" + a + "'");
        }
        const std::string body = a.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("override " + a + " needs a value");
            out.emplace_back(body, extras[++i]);
        }
    }
    return out;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& extras,
                      const std::optional<std::uint64_t>& seed) {
    auto overrides = parse_overrides(extras);
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    return load_run_config(path.empty() ? std::nullopt : std::optional<fs::path>(path), overrides);
}

void check_data_fits(const std::vector<GroundingSample>& data, const ModelConfig& m, const std::string& what) {
    for (const auto& s : data) {
        if (s.features.cols != static_cast<std::size_t>(m.video_feature_dim)) {
            throw Mismatch(what + ": sample '" + s.video_id + "' has feature dim " + std::to_string(s.features.cols) +
                           ", model expects " + std::to_string(m.video_feature_dim));
        }
        if (s.features.rows > static_cast<std::size_t>(m.max_video_tokens)) {
            throw Mismatch(what + ": sample '" + s.video_id + "' has " + std::to_string(s.features.rows) +
                           " video tokens, model allows " + std::to_string(m.max_video_tokens));
        }
        for (const auto& q : s.queries) {
            auto check = [&](const std::vector<int>& ids) {
                for (int id : ids)
                    if (id >= m.vocab_size) {
                        throw Mismatch(what + ": query '" + q.id + "' of '" + s.video_id + "' uses token id " +
                                       std::to_string(id) + " outside the model vocabulary of " +
                                       std::to_string(m.vocab_size));
                    }
            };
            check(q.query_tokens);
            if (q.enriched_tokens) check(*q.enriched_tokens);
        }
    }
}

int cmd_gen_data(const std::string& spec, const std::string& out_path, const std::string& vocab_path,
                 const std::vector<std::string>& extras, const std::optional<std::uint64_t>& seed, std::ostream& err) {
    const RunConfig cfg = load_config(spec, extras, seed);
    const SyntheticData d = generate_synthetic(cfg.generator);
    write_jsonl(d.samples, out_path);
    if (!vocab_path.empty()) d.world.vocab.write(vocab_path);
    err << "wrote " << d.samples.size() << " " << to_string(cfg.generator.task) << " samples to " << out_path << "\n";
    return ok;
}

int cmd_train(const std::string& config, const std::string& data_path, const std::string& out_dir,
              const std::string& resume, const std::string& vocab_path, const std::vector<std::string>& extras,
              const std::optional<std::uint64_t>& seed, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = load_config(config, extras, seed);
    const auto data = read_jsonl(data_path);
    if (data.empty()) throw DataError(data_path + ": no samples");
    check_data_fits(data, cfg.model, data_path);
    TrainOptions opts;
    opts.out_dir = fs::path(out_dir);
    if (!resume.empty()) opts.resume_from = fs::path(resume);
    if (!vocab_path.empty()) opts.vocab_tokens = Vocabulary::read(vocab_path).tokens();
    opts.log = &err;
    fs::create_directories(out_dir);
    {
        std::ofstream c(fs::path(out_dir) / "config.json");
        c << to_json(cfg).dump(2) << "\n";
    }
    GroundingModel model(cfg.model);
    err << "training " << model.parameter_count() << " parameters on " << data.size() << " samples, "
        << total_steps(data.size(), cfg.train) << " steps, mode " << to_string(cfg.train.mode) << "\n";
    const TrainReport r = train(model, data, cfg.train, opts);
    json summary = {{"steps", r.steps},
                    {"epochs", r.epochs.size()},
                    {"mil_violations", r.violations},
                    {"final_checkpoint", (fs::path(out_dir) / "final.ckpt").string()}};
    if (!r.epochs.empty()) {
        summary["train_miou"] = r.epochs.back().train_miou;
        summary["loss"] = {{"lm", r.epochs.back().lm},
                           {"l1", r.epochs.back().l1},
                           {"giou_term", r.epochs.back().giou_term},
                           {"total", r.epochs.back().total}};
        summary["lambda_lm"] = cfg.train.loss.lambda_lm;
    }
    out << summary.dump() << "\n";
    return ok;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& mode,
             const std::string& out_path, bool dump, const std::string& vocab_path, std::size_t max_new,
             std::ostream& err) {
    const EvalMode m = parse_eval_mode(mode);
    const auto data = read_jsonl(data_path);
    Checkpoint c;
    try {
        c = read_checkpoint(ckpt_path);
    } catch (const CheckpointError& e) {
        throw Mismatch(e.what());
    }
    std::optional<Vocabulary> vocab;
    if (!vocab_path.empty()) {
        vocab = Vocabulary::read(vocab_path);
        if (!c.vocab.empty() && c.vocab != vocab->tokens()) {
            throw Mismatch("vocabulary " + vocab_path + " differs from the one stored in " + ckpt_path);
        }
    } else if (!c.vocab.empty()) {
        vocab = Vocabulary::from_tokens(c.vocab);
    }
    if (vocab && static_cast<int>(vocab->size()) > c.model.vocab_size) {
        throw Mismatch("vocabulary has " + std::to_string(vocab->size()) + " tokens, model only " +
                       std::to_string(c.model.vocab_size));
    }
    if (dump && !vocab) throw ConfigError("--dump-enrichments needs a vocabulary (--vocab or one stored in the checkpoint)");
    check_data_fits(data, c.model, data_path);
    if (vocab) {
        for (const auto& s : data)
            for (const auto& q : s.queries)
                for (int id : q.query_tokens)
                    if (static_cast<std::size_t>(id) >= vocab->size()) {
                        throw Mismatch(data_path + ": token id " + std::to_string(id) + " is not in the vocabulary");
                    }
    }
    GroundingModel model = [&] {
        try {
            return c.restore_model();
        } catch (const std::exception& e) {
            throw Mismatch(e.what());
        }
    }();
    PredictOptions opts;
    opts.mode = m;
    opts.max_new_tokens = max_new;
    if (dump) opts.vocab = &*vocab;
    const auto preds = predict(model, data, opts);
    write_predictions(preds, out_path);
    const auto silent = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.no_emission; });
    err << "wrote " << preds.size() << " predictions (" << silent << " no-emission) to " << out_path << "\n";
    return ok;
}

int cmd_score(const std::string& preds_path, const std::string& gts_path, const std::string& protocol,
              const std::string& out_path, std::ostream& out, std::ostream& err) {
    const Task t = parse_task(protocol);
    const auto preds = read_predictions(preds_path);
    const auto gts = read_jsonl(gts_path);
    if (preds.empty()) err << "warning: " << preds_path << " holds no predictions; every query scores as a miss\n";
    const MetricReport r = score_protocol(t, preds, gts);
    err << r.to_table();
    out << r.to_json().dump() << "\n";
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        if (!f) throw DataError("cannot write report " + out_path);
        f << r.to_json().dump(2) << "\n";
    }
    return ok;
}

int cmd_grad_check(const std::string& config, const std::vector<std::string>& extras,
                   const std::optional<std::uint64_t>& seed, std::size_t probes, double tol, double step,
                   std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(config, extras, seed);
    cfg.generator.n_samples = 1;
    const auto d = generate_synthetic(cfg.generator);
    const GroundingSample& s = d.samples.front();
    check_data_fits(d.samples, cfg.model, "generated sample");
    GroundingModel model(cfg.model);
    std::vector<bool> enriched(s.queries.size(), false);
    for (std::size_t q = 0; q < s.queries.size(); ++q) enriched[q] = s.queries[q].enriched_tokens.has_value();

    std::vector<std::pair<std::string, ad::Tensor>> leaves;
    for (const auto& p : model.parameters()) leaves.emplace_back(p.name, p.tensor);
    ad::GradCheckOptions opts;
    opts.probes = probes;
    opts.tol = tol;
    opts.step = step;
    opts.seed = cfg.train.seed;
    const auto report = ad::grad_check([&] { return run_branch(model, s, enriched, cfg.train.loss).total; }, leaves, opts);

    json leaves_json = json::array();
    for (const auto& l : report.leaves)
        if (l.probed) leaves_json.push_back({{"name", l.name}, {"probed", l.probed}, {"max_rel_error", l.max_rel_error}});
    out << json{{"passed", report.passed},
                {"probed", report.probed},
                {"max_rel_error", report.max_rel_error},
                {"non_finite", report.non_finite},
                {"tol", tol},
                {"leaves", leaves_json}}
               .dump()
        << "\n";
    err << (report.passed ? "PASS" : "FAIL") << ": " << report.probed << " probes, max relative error "
        << report.max_rel_error << " (tol " << tol << ")\n";
    return report.passed ? ok : internal_error;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Enrich-and-detect temporal grounding toolkit", "edvtg"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string spec, out_path, vocab_path, config, data, out_dir, resume, checkpoint, mode = "enrich-detect", preds,
        gts, protocol;
    bool dump = false;
    std::size_t probes = 64, max_new = 0;
    double tol = 1e-4, step = 1e-5;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic sample file");
    gen->add_option("--spec", spec, "Config file (generator section used)");
    gen->add_option("--out", out_path, "Output sample file")->required();
    gen->add_option("--vocab", vocab_path, "Also write the vocabulary here");
    gen->add_option("--seed", seed, "Seed for every random source");
    gen->allow_extras();

    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--config", config, "Config file");
    tr->add_option("--data", data, "Training sample file")->required();
    tr->add_option("--out-dir", out_dir, "Directory for checkpoints and report.jsonl")->required();
    tr->add_option("--resume", resume, "Checkpoint to resume from");
    tr->add_option("--vocab", vocab_path, "Vocabulary to store in checkpoints");
    tr->add_option("--seed", seed, "Seed for every random source");
    tr->allow_extras();

    auto* ev = app.add_subcommand("eval", "Predict intervals for a sample file");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    ev->add_option("--data", data, "Sample file")->required();
    ev->add_option("--mode", mode, "enrich-detect or direct-only");
    ev->add_option("--out", out_path, "Prediction file")->required();
    ev->add_flag("--dump-enrichments", dump, "Attach generated query text to each record");
    ev->add_option("--vocab", vocab_path, "Vocabulary file (must match the checkpoint)");
    ev->add_option("--max-new-tokens", max_new, "Generation budget (0: model text limit)");

    auto* sc = app.add_subcommand("score", "Score predictions against ground truth");
    sc->add_option("--preds", preds, "Prediction file")->required();
    sc->add_option("--gts", gts, "Ground-truth sample file")->required();
    sc->add_option("--protocol", protocol, "stg, vpg, qg or ag")->required();
    sc->add_option("--out", out_path, "Also write the JSON report here");

    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the end-to-end loss");
    gc->add_option("--config", config, "Config file");
    gc->add_option("--probes", probes, "Random parameter elements to probe (0: all)");
    gc->add_option("--tol", tol, "Relative error tolerance");
    gc->add_option("--step", step, "Central difference step");
    gc->add_option("--seed", seed, "Seed for every random source");
    gc->allow_extras();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : input_error;
    }

    try {
        if (*gen) return cmd_gen_data(spec, out_path, vocab_path, gen->remaining(), seed, err);
        if (*tr) return cmd_train(config, data, out_dir, resume, vocab_path, tr->remaining(), seed, out, err);
        if (*ev) return cmd_eval(checkpoint, data, mode, out_path, dump, vocab_path, max_new, err);
        if (*sc) return cmd_score(preds, gts, protocol, out_path, out, err);
        if (*gc) return cmd_grad_check(config, gc->remaining(), seed, probes, tol, step, out, err);
    } catch (const TrainingDiverged& e) {
        err << "error: training diverged: " << e.what() << "\n";
        return diverged;
    } catch (const Mismatch& e) {
        err << "error: " << e.what() << "\n";
        return artifact_mismatch;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return artifact_mismatch;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return internal_error;
    }
    return internal_error;
}

}  // namespace edvtg::cli
