// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edvtg/checkpoint.hpp"
#include "edvtg/cli.hpp"
#include "edvtg/config.hpp"
#include "edvtg/dataset.hpp"
#include "edvtg/inference.hpp"
#include "edvtg/metrics.hpp"
#include "edvtg/model.hpp"
#include "edvtg/objectives.hpp"
#include "edvtg/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace edvtg;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradProbes = 64;
constexpr double kGradSeconds = 60.0;
constexpr double kGeomTol = 2e-6;
constexpr int kGeomPairs = 1000;
constexpr double kMetricTol = 1e-9;
constexpr int kMetricInstances = 200;
constexpr double kOverfitMiou = 0.9;
constexpr std::size_t kOverfitSteps = 2000;
constexpr double kOverfitSeconds = 600.0;
constexpr double kBenefitGap = 0.10;
constexpr double kBenefitSeconds = 1800.0;
constexpr double kLateFraction = 0.8;
constexpr double kFixtureTol = 1e-12;

struct Result {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- shared training runs ----

struct OverfitRun {
    TrainReport report;
    double seconds = 0.0;
    fs::path final_ckpt;
};

std::vector<GroundingSample> overfit_data() {
    GeneratorSpec g;
    g.n_samples = 64;
    g.task = Task::stg;
    g.ambiguity_rate = 0.0;
    g.seed = 11;
    return generate_synthetic(g).samples;
}

TrainConfig overfit_config() {
    auto t = TrainConfig::toy();
    t.epochs = 125;
    t.batch_size = 4;
    t.seed = 3;
    return t;
}

OverfitRun run_overfit(const fs::path& dir) {
    fs::remove_all(dir);
    const auto data = overfit_data();
    GroundingModel model(ModelConfig::toy());
    TrainOptions opts;
    opts.out_dir = dir;
    const auto t0 = Clock::now();
    OverfitRun r;
    r.report = train(model, data, overfit_config(), opts);
    r.seconds = seconds_since(t0);
    r.final_ckpt = dir / "final.ckpt";
    return r;
}

struct LateCounts {
    std::size_t corrupted = 0, corrupted_direct = 0;
    std::size_t clean = 0, clean_enriched = 0;
};

struct BenefitRun {
    double miou = 0.0;
    std::size_t violations = 0;
    LateCounts late;
    double seconds = 0.0;
};

ModelConfig small_model() {
    auto m = ModelConfig::toy();
    m.model_dim = 32;
    m.ffn_dim = 128;
    m.decoder_hidden = 32;
    m.decoder_ffn_dim = 128;
    m.decoder_mlp_dims = {32, 16, 8, 2};
    return m;
}

GeneratorSpec benefit_spec(std::size_t n, std::uint64_t seed) {
    GeneratorSpec g;
    g.n_samples = n;
    g.task = Task::stg;
    g.ambiguity_rate = 0.7;
    g.corruption_rate = 0.1;
    g.seed = seed;
    return g;
}

BenefitRun run_benefit(const SyntheticData& train_set, const std::vector<GroundingSample>& eval_set, TrainMode mode,
                       EvalMode eval_mode) {
    auto cfg = TrainConfig::toy();
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.seed = 5;
    cfg.mode = mode;
    GroundingModel model(small_model());
    BenefitRun r;
    TrainOptions opts;
    opts.observer = [&](const StepEvent& e) {
        if (static_cast<double>(e.step) < kLateFraction * static_cast<double>(e.total_steps)) return;
        if (e.outcome->skipped) return;
        const auto& trace = train_set.traces[e.sample_index].front();
        if (!trace.ambiguous) return;
        const bool enriched = e.outcome->selected.enriched.front();
        if (trace.corrupted) {
            ++r.late.corrupted;
            r.late.corrupted_direct += !enriched;
        } else {
            ++r.late.clean;
            r.late.clean_enriched += enriched;
        }
    };
    const auto t0 = Clock::now();
    const auto report = train(model, train_set.samples, cfg, opts);
    r.violations = report.violations;
    PredictOptions p;
    p.mode = eval_mode;
    r.miou = mean_iou(predict(model, eval_set, p), ground_truths(eval_set));
    r.seconds = seconds_since(t0);
    return r;
}

// ---- criteria ----

Result gradient_check(const fs::path& work) {
    const auto t0 = Clock::now();
    auto m = ModelConfig::toy();
    m.model_dim = 32;
    m.n_layers = 2;
    m.zero_init_decoder_head = false;
    std::ostringstream out, err;
    const fs::path cfg = work / "gradcheck.json";
    std::ofstream(cfg) << nlohmann::json{{"model", to_json(m)}}.dump();
    const int code = cli::run({"grad-check", "--config", cfg.string(), "--probes", std::to_string(kGradProbes), "--tol",
                               fmt(kGradTol, 17)},
                              out, err);
    const double secs = seconds_since(t0);
    if (code != cli::ok && code != cli::internal_error) return {false, "grad-check exited " + std::to_string(code)};
    const auto j = nlohmann::json::parse(out.str());
    const auto probed = j["probed"].get<std::size_t>();
    const double rel = j["max_rel_error"].get<double>();
    const bool pass = j["passed"].get<bool>() && probed >= kGradProbes && rel <= kGradTol && secs <= kGradSeconds;
    return {pass, std::to_string(probed) + " probes, max rel err " + fmt(rel, 3) + " (tol " + fmt(kGradTol) + "), " +
                      fmt(secs, 3) + " s"};
}

Result geometry_oracle() {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    bool giou_rule = true;
    for (int i = 0; i < kGeomPairs; ++i) {
        const auto a = oracle::grid_interval(rng), b = oracle::grid_interval(rng);
        const auto ref = oracle::binned(a, b);
        worst = std::max({worst, std::abs(iou(a, b) - ref.iou), std::abs(giou(a, b) - ref.giou),
                          std::abs(*iop(a, b) - ref.iop)});
        const double g = giou(a, b);
        if (!(g > -1.0 && g <= 1.0)) giou_rule = false;
        if (intersection_length(a, b) > 0.0 && g != iou(a, b)) giou_rule = false;
    }
    return {worst <= kGeomTol && giou_rule, std::to_string(kGeomPairs) + " pairs, max err " + fmt(worst, 3) +
                                               " (tol " + fmt(kGeomTol) + "), giou rules " +
                                               (giou_rule ? "hold" : "broken")};
}

Result mil_invariant(const OverfitRun& stg) {
    GeneratorSpec g;
    g.n_samples = 24;
    g.task = Task::vpg;
    g.ambiguity_rate = 0.7;
    g.num_tokens = 16;
    g.seed = 21;
    const auto data = generate_synthetic(g).samples;
    auto cfg = TrainConfig::toy();
    cfg.epochs = 3;
    cfg.batch_size = 4;
    std::size_t steps = 0, wrong_index = 0;
    TrainOptions opts;
    opts.observer = [&](const StepEvent& e) {
        if (e.outcome->skipped) return;
        ++steps;
        const auto& o = *e.outcome;
        const auto idx = select_pass(o.branch_grnd);
        if (static_cast<std::size_t>(o.selected.index) != idx || o.selected.grnd_loss != o.branch_grnd[idx]) ++wrong_index;
    };
    GroundingModel model(ModelConfig::toy());
    const auto report = train(model, data, cfg, opts);

    const std::vector<double> tied{0.4, 0.2, 0.2, 0.3};
    const bool tie_break = select_pass(tied) == 1 && select_enriched(0.3, 0.3) && !select_enriched(0.2, 0.3);
    const std::size_t violations = stg.report.violations + report.violations + wrong_index;
    return {violations == 0 && tie_break && steps > 0,
            std::to_string(violations) + " violations over " + std::to_string(stg.report.steps) + " stg + " +
                std::to_string(report.steps) + " vpg steps, tie-break " + (tie_break ? "ok" : "wrong")};
}

Result point_masking() {
    GeneratorSpec g;
    g.n_samples = 60;
    g.task = Task::qg;
    g.point_rate = 0.5;
    g.seed = 31;
    const auto data = generate_synthetic(g).samples;
    auto mcfg = ModelConfig::toy();
    mcfg.zero_init_decoder_head = false;
    GroundingModel model(mcfg);
    const LossWeights w;
    std::size_t points = 0, point_nonzero = 0, intervals = 0, interval_zero = 0;
    for (const auto& s : data) {
        const auto in = ModelInput::from_sample(s);
        const auto out = model.forward_teacher_forced(in, target_text(s, {false}));
        const auto loss = grounding_loss(out.interval_outputs.front(), s.queries.front().target, w);
        ad::backward(loss);
        const double wg = out.interval_outputs.front().grad()[1];
        if (std::holds_alternative<PointAnnotation>(s.queries.front().target)) {
            ++points;
            point_nonzero += wg != 0.0;
        } else {
            ++intervals;
            interval_zero += wg == 0.0;
        }
        model.zero_grad();
    }
    const bool pass = points > 0 && intervals > 0 && point_nonzero == 0 && interval_zero == 0;
    return {pass, std::to_string(points) + " point samples with width grad != 0: " + std::to_string(point_nonzero) +
                      "; " + std::to_string(intervals) + " interval samples with width grad == 0: " +
                      std::to_string(interval_zero)};
}

Result overfit(const OverfitRun& a, const OverfitRun& b) {
    const double miou = a.report.epochs.back().train_miou;
    const bool identical = slurp(a.final_ckpt) == slurp(b.final_ckpt) && !slurp(a.final_ckpt).empty();
    const bool pass = miou >= kOverfitMiou && a.report.steps <= kOverfitSteps && identical &&
                      a.seconds + b.seconds <= kOverfitSeconds;
    return {pass, "train mIoU " + fmt(miou) + " (min " + fmt(kOverfitMiou) + ") after " +
                      std::to_string(a.report.steps) + " steps, same-seed runs " +
                      (identical ? "bit-identical" : "differ") + ", " + fmt(a.seconds + b.seconds, 3) + " s"};
}

struct BenefitAll {
    BenefitRun mil, direct, enriched;
    double seconds = 0.0;
};

BenefitAll run_benefit_all() {
    const auto t0 = Clock::now();
    const auto train_set = generate_synthetic(benefit_spec(2000, 1));
    const auto eval_set = generate_synthetic(benefit_spec(500, 2)).samples;
    BenefitAll r;
    r.mil = run_benefit(train_set, eval_set, TrainMode::mil, EvalMode::enrich_detect);
    std::cerr << "  mil eval mIoU " << r.mil.miou << " (" << r.mil.seconds << " s)\n";
    r.direct = run_benefit(train_set, eval_set, TrainMode::direct, EvalMode::direct_only);
    std::cerr << "  direct eval mIoU " << r.direct.miou << " (" << r.direct.seconds << " s)\n";
    r.enriched = run_benefit(train_set, eval_set, TrainMode::enriched, EvalMode::enrich_detect);
    std::cerr << "  forced-enriched eval mIoU " << r.enriched.miou << " (" << r.enriched.seconds << " s)\n";
    r.seconds = seconds_since(t0);
    return r;
}

Result enrichment_benefit(const BenefitAll& r) {
    const double gap = r.mil.miou - r.direct.miou;
    const bool pass = gap >= kBenefitGap && r.mil.miou >= r.enriched.miou && r.seconds <= kBenefitSeconds;
    return {pass, "eval mIoU mil " + fmt(r.mil.miou) + ", direct " + fmt(r.direct.miou) + " (gap " + fmt(gap, 3) +
                      ", min " + fmt(kBenefitGap) + "), forced-enriched " + fmt(r.enriched.miou) + " (need mil >= it), " +
                      fmt(r.seconds, 4) + " s"};
}

Result noise_handling(const BenefitAll& r) {
    const auto& c = r.mil.late;
    const double direct_frac = c.corrupted ? static_cast<double>(c.corrupted_direct) / c.corrupted : 0.0;
    const double enriched_frac = c.clean ? static_cast<double>(c.clean_enriched) / c.clean : 0.0;
    const bool pass = direct_frac > 0.5 && enriched_frac > 0.5;
    return {pass, "late steps: corrupted picks direct " + fmt(direct_frac, 3) + " of " + std::to_string(c.corrupted) +
                      ", clean ambiguous picks enriched " + fmt(enriched_frac, 3) + " of " + std::to_string(c.clean)};
}

Result metric_oracle() {
    std::mt19937_64 rng(4242);
    double worst = 0.0;
    for (int i = 0; i < kMetricInstances; ++i) worst = std::max(worst, oracle::max_metric_error(oracle::random_instance(rng)));
    auto gt = [](const std::string& q, QueryTarget t) { return GroundTruth{"v", q, std::move(t)}; };
    auto pred = [](const std::string& q, double s, double e, double c) {
        return PredictionRecord{"v", q, TemporalInterval{s, e}, c, true, false, std::nullopt};
    };
    const std::vector<GroundTruth> g{gt("q1", TemporalInterval{0.0, 1.0}), gt("q2", NoTarget{}),
                                     gt("q3", TemporalInterval{0.0, 1.0})};
    const std::vector<PredictionRecord> p{pred("q1", 0.0, 0.8, 0.9), pred("q2", 0.1, 0.3, 0.8),
                                          pred("q3", 0.4, 1.0, 0.7)};
    const std::vector<double> tau{0.5};
    const double ap = article_map(p, g, tau).map;
    const bool ap_ok = std::abs(ap - 5.0 / 6.0) <= kFixtureTol;
    return {worst <= kMetricTol && ap_ok, std::to_string(kMetricInstances) + " instances, max err " + fmt(worst, 3) +
                                              " (tol " + fmt(kMetricTol) + "), worked AP " + fmt(ap, 6)};
}

Result schedule_and_optimizer() {
    const auto cfg = TrainConfig::paper();
    const std::size_t total = 1000;
    const bool anchors = lr_at(0, total, cfg) == 1e-5 && lr_at(200, total, cfg) == 5e-5 &&
                         lr_at(total - 1, total, cfg) == 1e-6;

    // First step: m = (1-b1) g, v = (1-b2) g^2, bias-corrected update lr * g / (|g| + eps) plus decay.
    TrainConfig c;
    c.weight_decay = 0.05;
    const double x0 = 0.8, g0 = -0.3, lr = 0.01;
    auto t = ad::Tensor::from({1}, {x0}, true);
    t.mutable_grad()[0] = g0;
    std::vector<NamedTensor> params{{"p", t, true}};
    AdamW adam(params);
    adam.step(params, lr, c);
    const double expect = x0 - lr * c.weight_decay * x0 - lr * g0 / (std::abs(g0) + c.adam_eps);
    const double err = std::abs(params[0].tensor[0] - expect);
    return {anchors && err <= kFixtureTol, std::string("lr anchors ") + (anchors ? "exact" : "off") +
                                               ", AdamW first-step err " + fmt(err, 3) + " (tol " + fmt(kFixtureTol) +
                                               ")"};
}

Result io_round_trips(const fs::path& work, const OverfitRun& run) {
    std::vector<std::string> problems;
    // dataset
    for (auto task : {Task::stg, Task::vpg, Task::qg, Task::ag}) {
        GeneratorSpec g;
        g.n_samples = 50;
        g.task = task;
        g.point_rate = task == Task::qg ? 0.5 : 0.0;
        g.negative_rate = task == Task::ag ? 0.3 : 0.0;
        g.ambiguity_rate = 0.5;
        g.num_tokens = 24;
        const auto samples = generate_synthetic(g).samples;
        const auto p = work / ("round_" + to_string(task) + ".jsonl");
        write_jsonl(samples, p);
        if (read_jsonl(p) != samples) problems.push_back("dataset " + to_string(task));
    }
    // checkpoint
    const auto ckpt = read_checkpoint(run.final_ckpt);
    write_checkpoint(ckpt, work / "rewrite.ckpt");
    if (read_checkpoint(work / "rewrite.ckpt") != ckpt || slurp(work / "rewrite.ckpt") != slurp(run.final_ckpt))
        problems.push_back("checkpoint");
    // malformed inputs name the field
    auto line = to_jsonl_line(overfit_data().front());
    const auto at = line.find("\"end\":");
    line.replace(at, line.find_first_of(",}", at) - at, "\"end\":-0.5");
    std::string diag;
    try {
        parse_jsonl_line(line, 3);
    } catch (const DataError& e) {
        diag = e.what();
    }
    if (diag.find("line 3") == std::string::npos || diag.find("queries[0].target.end") == std::string::npos)
        problems.push_back("malformed sample diagnostic '" + diag + "'");
    std::ofstream(work / "bad.ckpt", std::ios::binary) << "EDVTGCKP";
    try {
        read_checkpoint(work / "bad.ckpt");
        problems.push_back("truncated checkpoint accepted");
    } catch (const CheckpointError&) {
    }
    // gen-data determinism
    std::ofstream(work / "spec.json") << R"({"generator": {"n_samples": 40, "task": "ag", "negative_rate": 0.3}})";
    std::ostringstream out, err;
    for (const char* name : {"gen_a.jsonl", "gen_b.jsonl"}) {
        if (cli::run({"gen-data", "--spec", (work / "spec.json").string(), "--seed", "17", "--out", (work / name).string()},
                     out, err) != cli::ok)
            problems.push_back("gen-data failed");
    }
    const auto a = slurp(work / "gen_a.jsonl");
    if (a.empty() || a != slurp(work / "gen_b.jsonl")) problems.push_back("gen-data not byte-identical");
    std::string detail = "dataset (4 tasks), checkpoint, malformed diagnostics, gen-data";
    for (const auto& p : problems) detail += "; FAILED " + p;
    return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string work_dir = "acceptance_work";
    app.add_option("--work-dir", work_dir, "Scratch directory for runs");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(work_dir);
    fs::create_directories(work);

    int failures = 0;
    auto report = [&](int id, const std::string& name, const std::function<Result()>& fn) {
        Result r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failures += !r.pass;
        std::cout << (r.pass ? "PASS" : "FAIL") << " AC" << id << " " << name << ": " << r.detail << std::endl;
    };

    report(1, "gradient check", [&] { return gradient_check(work); });
    report(2, "interval geometry oracle", geometry_oracle);

    std::cerr << "overfit runs...\n";
    OverfitRun first, second;
    try {
        first = run_overfit(work / "overfit_a");
        second = run_overfit(work / "overfit_b");
    } catch (const std::exception& e) {
        std::cerr << "overfit run failed: " << e.what() << "\n";
    }
    const bool have_overfit = !first.report.epochs.empty();
    report(3, "MIL selection invariant", [&] {
        if (!have_overfit) return Result{false, "overfit run did not complete"};
        return mil_invariant(first);
    });
    report(4, "point-target width masking", point_masking);
    report(5, "overfit sanity", [&] {
        if (!have_overfit) return Result{false, "overfit run did not complete"};
        return overfit(first, second);
    });

    std::cerr << "enrichment runs (mil, direct, forced-enriched)...\n";
    BenefitAll benefit;
    bool have_benefit = false;
    try {
        benefit = run_benefit_all();
        have_benefit = true;
    } catch (const std::exception& e) {
        std::cerr << "enrichment runs failed: " << e.what() << "\n";
    }
    report(6, "enrichment benefit", [&] {
        if (!have_benefit) return Result{false, "training runs did not complete"};
        return enrichment_benefit(benefit);
    });
    report(7, "MIL noise handling", [&] {
        if (!have_benefit) return Result{false, "training runs did not complete"};
        return noise_handling(benefit);
    });
    report(8, "metric oracle", metric_oracle);
    report(9, "schedule and optimizer fixtures", schedule_and_optimizer);
    report(10, "I/O round trips", [&] {
        if (!have_overfit) return Result{false, "no checkpoint from the overfit run"};
        return io_round_trips(work, first);
    });

    std::cout << (failures ? "FAIL" : "PASS") << " acceptance: " << 10 - failures << "/10 criteria met" << std::endl;
    return failures ? 1 : 0;
}
