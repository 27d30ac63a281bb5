// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded synthetic grounding data.
//
// Each video is R feature tokens: background noise plus contiguous runs drawn
// from unit-norm event prototypes. Prototypes come in sibling pairs that
// share a coarse-class word; each prototype also has its own fine word.
// Every video additionally carries one short cue run whose type (one of two
// cue prototypes) tells which sibling an underspecified query refers to.
//
//   clear query:      "coarseK fineJ"      enrichment = same words
//   ambiguous query:  "coarseK"            enrichment = "coarseK fineJ"
//
// An ambiguous query's video always contains both siblings, so the query
// words alone cannot pick the run; the enrichment names it. A corrupted
// enrichment names the sibling instead while the target stays correct.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "edvtg/dataset.hpp"

namespace edvtg {

namespace {

struct Event {
    int prototype = 0;
    std::size_t length = 0;
    std::size_t start = 0;
    bool cue = false;
};

bool bernoulli(std::mt19937_64& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::size_t worst_case_tokens(const GeneratorSpec& s) {
    switch (s.task) {
        case Task::stg:
        case Task::qg: return 3 * s.min_run + 1;
        case Task::vpg:
        case Task::ag: return 2 * s.max_queries * s.min_run + 1;
    }
    return 0;
}

// Shrinks lengths until they fit, then scatters the runs in random order
// with random gaps.
void place(std::vector<Event>& events, std::size_t R, std::size_t min_run, std::mt19937_64& rng) {
    auto floor_of = [&](const Event& e) { return e.cue ? std::size_t{1} : min_run; };
    std::size_t total = 0;
    for (const auto& e : events) total += e.length;
    while (total > R) {
        std::vector<std::size_t> shrinkable;
        for (std::size_t i = 0; i < events.size(); ++i)
            if (events[i].length > floor_of(events[i])) shrinkable.push_back(i);
        if (shrinkable.empty()) {
            throw std::invalid_argument("video of " + std::to_string(R) + " tokens cannot host " +
                                        std::to_string(events.size()) + " events");
        }
        --events[shrinkable[uniform_index(rng, 0, shrinkable.size() - 1)]].length;
        --total;
    }
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> gaps(events.size() + 1, 0);
    for (std::size_t f = 0; f < R - total; ++f) ++gaps[uniform_index(rng, 0, events.size())];
    std::size_t pos = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        pos += gaps[k];
        events[order[k]].start = pos;
        pos += events[order[k]].length;
    }
}

struct Builder {
    const GeneratorSpec& spec;
    const SyntheticWorld& world;
    std::mt19937_64& rng;

    std::size_t run_length() { return uniform_index(rng, spec.min_run, spec.max_run); }

    Event event(int prototype) { return {prototype, run_length(), 0, false}; }

    int sibling(int prototype) const { return prototype ^ 1; }

    int random_prototype_outside(const std::vector<int>& classes) {
        std::vector<int> pool;
        for (int p = 0; p < 2 * world.n_classes(); ++p) {
            if (std::find(classes.begin(), classes.end(), p / 2) == classes.end()) pool.push_back(p);
        }
        return pool[uniform_index(rng, 0, pool.size() - 1)];
    }

    FeatureMatrix render(const std::vector<Event>& events) {
        const std::size_t R = spec.num_tokens, D = spec.feature_dim;
        FeatureMatrix f{R, D, std::vector<double>(R * D)};
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (auto& v : f.values) v = noise(rng);
        for (const auto& e : events) {
            const auto& proto = world.prototypes[static_cast<std::size_t>(e.prototype)];
            for (std::size_t t = e.start; t < e.start + e.length; ++t)
                for (std::size_t d = 0; d < D; ++d) f.values[t * D + d] += proto[d];
        }
        for (auto& v : f.values) v = round6(v);
        return f;
    }

    TemporalInterval span_of(const Event& e) const {
        const double R = static_cast<double>(spec.num_tokens);
        return {static_cast<double>(e.start) / R, static_cast<double>(e.start + e.length) / R};
    }

    // A groundable query about class `cls`; appends its target (and, when
    // needed, the sibling) to `events`. Returns the target's event index.
    std::size_t groundable_query(int cls, int cue_bit, double sibling_rate, QueryAnnotation& qa, QueryTrace& tr,
                                 std::vector<Event>& events) {
        tr.ambiguous = bernoulli(rng, spec.ambiguity_rate);
        const int variant = tr.ambiguous ? cue_bit : static_cast<int>(bernoulli(rng, 0.5));
        const int target = 2 * cls + variant;
        tr.target_prototype = target;
        const bool with_sibling = tr.ambiguous || bernoulli(rng, sibling_rate);
        const std::size_t idx = events.size();
        events.push_back(event(target));
        if (with_sibling) events.push_back(event(sibling(target)));

        const int coarse = world.coarse_token(cls);
        if (tr.ambiguous) {
            tr.corrupted = bernoulli(rng, spec.corruption_rate);
            qa.query_tokens = {coarse};
            qa.enriched_tokens = std::vector<int>{coarse, world.fine_token(tr.corrupted ? sibling(target) : target)};
        } else {
            qa.query_tokens = {coarse, world.fine_token(target)};
            qa.enriched_tokens = qa.query_tokens;
        }
        return idx;
    }

    std::vector<int> pick_classes(std::size_t n) {
        std::vector<int> classes(static_cast<std::size_t>(world.n_classes()));
        std::iota(classes.begin(), classes.end(), 0);
        std::shuffle(classes.begin(), classes.end(), rng);
        classes.resize(n);
        return classes;
    }

    void single_query(GroundingSample& s, std::vector<QueryTrace>& traces) {
        const int cls = static_cast<int>(uniform_index(rng, 0, static_cast<std::size_t>(world.n_classes() - 1)));
        const int cue_bit = static_cast<int>(bernoulli(rng, 0.5));
        std::vector<Event> events;
        QueryAnnotation qa;
        QueryTrace tr;
        qa.id = "q0";
        const std::size_t target_idx = groundable_query(cls, cue_bit, 0.5, qa, tr, events);
        if (bernoulli(rng, 0.5)) events.push_back(event(random_prototype_outside({cls})));
        events.push_back({world.n_event_types + cue_bit, uniform_index(rng, 1, 2), 0, true});
        place(events, spec.num_tokens, spec.min_run, rng);
        const bool point = bernoulli(rng, spec.point_rate);
        const TemporalInterval span = span_of(events[target_idx]);
        if (point) {
            qa.target = PointAnnotation{0.5 * (span.start + span.end)};
        } else {
            qa.target = span;
        }
        s.features = render(events);
        s.queries = {std::move(qa)};
        traces = {tr};
    }

    void multi_query(GroundingSample& s, std::vector<QueryTrace>& traces) {
        const std::size_t n = uniform_index(rng, spec.min_queries, spec.max_queries);
        const int cue_bit = static_cast<int>(bernoulli(rng, 0.5));
        std::vector<bool> negative(n, false);
        if (s.task == Task::ag) {
            for (std::size_t q = 0; q < n; ++q) negative[q] = bernoulli(rng, spec.negative_rate);
        }
        const std::size_t n_pos = static_cast<std::size_t>(std::count(negative.begin(), negative.end(), false));
        const auto classes = pick_classes(std::min<std::size_t>(static_cast<std::size_t>(world.n_classes()), n));

        std::vector<Event> events;
        std::vector<QueryAnnotation> pos_q;
        std::vector<QueryTrace> pos_t;
        std::vector<std::size_t> pos_event;
        for (std::size_t q = 0; q < n_pos; ++q) {
            QueryAnnotation qa;
            QueryTrace tr;
            pos_event.push_back(groundable_query(classes[q], cue_bit, 0.3, qa, tr, events));
            pos_q.push_back(std::move(qa));
            pos_t.push_back(tr);
        }
        events.push_back({world.n_event_types + cue_bit, uniform_index(rng, 1, 2), 0, true});
        place(events, spec.num_tokens, spec.min_run, rng);

        // temporal order for the groundable queries
        std::vector<std::size_t> order(n_pos);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return events[pos_event[a]].start < events[pos_event[b]].start; });

        std::vector<QueryAnnotation> queries;
        std::vector<QueryTrace> trs;
        for (std::size_t k : order) {
            pos_q[k].target = span_of(events[pos_event[k]]);
            queries.push_back(std::move(pos_q[k]));
            trs.push_back(pos_t[k]);
        }
        // negatives name a prototype whose class never appears in the video
        std::vector<int> present(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_pos));
        for (std::size_t q = 0; q < n - n_pos; ++q) {
            const int proto = random_prototype_outside(present);
            QueryAnnotation qa;
            qa.query_tokens = {world.coarse_token(proto / 2), world.fine_token(proto)};
            qa.target = NoTarget{};
            QueryTrace tr;
            tr.negative = true;
            tr.target_prototype = proto;
            const std::size_t at = uniform_index(rng, 0, queries.size());
            queries.insert(queries.begin() + static_cast<std::ptrdiff_t>(at), std::move(qa));
            trs.insert(trs.begin() + static_cast<std::ptrdiff_t>(at), tr);
        }
        for (std::size_t q = 0; q < queries.size(); ++q) queries[q].id = "q" + std::to_string(q);
        s.features = render(events);
        s.queries = std::move(queries);
        traces = std::move(trs);
    }
};

}  // namespace

void GeneratorSpec::validate() const {
    auto rate = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument(std::string("generator.") + name + " must lie in [0, 1], got " +
                                        std::to_string(v));
        }
    };
    rate(ambiguity_rate, "ambiguity_rate");
    rate(corruption_rate, "corruption_rate");
    rate(point_rate, "point_rate");
    rate(negative_rate, "negative_rate");
    if (n_event_types < 4) throw std::invalid_argument("generator.n_event_types must be at least 4");
    if (n_samples == 0) throw std::invalid_argument("generator.n_samples must be positive");
    if (num_tokens == 0 || feature_dim == 0) throw std::invalid_argument("generator: R and D_v must be positive");
    if (min_run == 0 || max_run < min_run) throw std::invalid_argument("generator: need 1 <= min_run <= max_run");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("generator.noise_std must be non-negative");
    const int classes = n_event_types / 2;
    if (task == Task::vpg || task == Task::ag) {
        if (max_queries < min_queries || min_queries < 1) throw std::invalid_argument("generator: bad query count range");
        if (task == Task::vpg && min_queries < 2) throw std::invalid_argument("generator: vpg needs min_queries >= 2");
        if (static_cast<int>(max_queries) > classes) {
            throw std::invalid_argument("generator: max_queries exceeds the number of coarse classes");
        }
        if (task == Task::ag && negative_rate > 0.0 && static_cast<int>(max_queries) >= classes) {
            throw std::invalid_argument("generator: ag negatives need a class absent from every video");
        }
    }
    const std::size_t need = worst_case_tokens(*this);
    if (need > num_tokens) {
        throw std::invalid_argument("generator: R=" + std::to_string(num_tokens) + " is too small to host the " +
                                    to_string(task) + " events (needs " + std::to_string(need) + ")");
    }
}

int SyntheticWorld::coarse_token(int cls) const { return tok::first_content + cls; }

int SyntheticWorld::fine_token(int prototype) const { return tok::first_content + n_classes() + prototype; }

std::vector<int> SyntheticWorld::referents(int token) const {
    const int c = token - tok::first_content;
    if (c >= 0 && c < n_classes()) return {2 * c, 2 * c + 1};
    const int f = c - n_classes();
    if (f >= 0 && f < n_event_types) return {f};
    return {};
}

SyntheticWorld make_world(const GeneratorSpec& spec) {
    SyntheticWorld w;
    w.n_event_types = spec.n_event_types;
    w.feature_dim = spec.feature_dim;
    const std::size_t count = static_cast<std::size_t>(spec.n_event_types) + 2;
    std::mt19937_64 rng(spec.world_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(spec.feature_dim);
        for (auto& x : v) x = gauss(rng);
        // orthogonalize while there is room, so prototypes stay separable
        if (i < spec.feature_dim) {
            for (const auto& u : w.prototypes) {
                const double d = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
                for (std::size_t k = 0; k < v.size(); ++k) v[k] -= d * u[k];
            }
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        for (auto& x : v) x /= norm;
        w.prototypes.push_back(std::move(v));
    }
    for (int c = 0; c < w.n_classes(); ++c) w.vocab.add("coarse" + std::to_string(c));
    for (int p = 0; p < w.n_event_types; ++p) w.vocab.add("fine" + std::to_string(p));
    return w;
}

SyntheticData generate_synthetic(const GeneratorSpec& spec) {
    spec.validate();
    SyntheticData data;
    data.world = make_world(spec);
    std::mt19937_64 rng(spec.seed);
    Builder b{spec, data.world, rng};
    std::uniform_real_distribution<double> duration(15.0, 150.0);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        GroundingSample s;
        s.video_id = "syn" + std::to_string(spec.seed) + "-" + std::to_string(i);
        s.duration_seconds = std::round(duration(rng) * 10.0) / 10.0;
        s.task = spec.task;
        std::vector<QueryTrace> traces;
        if (spec.task == Task::stg || spec.task == Task::qg) {
            b.single_query(s, traces);
        } else {
            b.multi_query(s, traces);
        }
        validate(s);
        data.samples.push_back(std::move(s));
        data.traces.push_back(std::move(traces));
    }
    return data;
}

}  // namespace edvtg
