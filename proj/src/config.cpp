// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "edvtg/config.hpp"

namespace edvtg {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + section + "." + key + "' has the wrong type: " + it->dump());
    }
}

void check_keys(const json& j, const json& known, const std::string& section) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ConfigError("unknown config key '" + section + "." + k + "'");
    }
}

void merge_strict(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError("config " + (path.empty() ? std::string("root") : "'" + path + "'") +
                                              " must be an object");
    for (const auto& [k, v] : patch.items()) {
        const std::string key = path.empty() ? k : path + "." + k;
        if (!base.contains(k)) throw ConfigError("unknown config key '" + key + "'");
        if (base[k].is_object()) {
            merge_strict(base[k], v, key);
        } else {
            base[k] = v;
        }
    }
}

template <typename F>
auto wrap(const std::string& section, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(section + ": " + e.what());
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size},
            {"model_dim", c.model_dim},
            {"n_heads", c.n_heads},
            {"n_layers", c.n_layers},
            {"ffn_dim", c.ffn_dim},
            {"video_feature_dim", c.video_feature_dim},
            {"max_video_tokens", c.max_video_tokens},
            {"max_text_tokens", c.max_text_tokens},
            {"decoder_layers", c.decoder_layers},
            {"decoder_heads", c.decoder_heads},
            {"decoder_hidden", c.decoder_hidden},
            {"decoder_ffn_dim", c.decoder_ffn_dim},
            {"decoder_mlp_dims", c.decoder_mlp_dims},
            {"zero_init_decoder_head", c.zero_init_decoder_head},
            {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"max_steps", c.max_steps},
            {"peak_lr", c.peak_lr},
            {"start_lr", c.start_lr},
            {"end_lr", c.end_lr},
            {"warmup_fraction", c.warmup_fraction},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},
            {"vpg_mil_passes", c.vpg_mil_passes},
            {"seed", c.seed},
            {"mode", to_string(c.mode)},
            {"max_skip_fraction", c.max_skip_fraction}};
}

json to_json(const LossWeights& w) {
    return {{"lambda_lm", w.lambda_lm}, {"lambda_l1", w.lambda_l1}, {"lambda_giou", w.lambda_giou}};
}

json to_json(const GeneratorSpec& g) {
    return {{"n_samples", g.n_samples},
            {"task", to_string(g.task)},
            {"n_event_types", g.n_event_types},
            {"num_tokens", g.num_tokens},
            {"feature_dim", g.feature_dim},
            {"ambiguity_rate", g.ambiguity_rate},
            {"corruption_rate", g.corruption_rate},
            {"point_rate", g.point_rate},
            {"negative_rate", g.negative_rate},
            {"seed", g.seed},
            {"world_seed", g.world_seed},
            {"noise_std", g.noise_std},
            {"min_run", g.min_run},
            {"max_run", g.max_run},
            {"min_queries", g.min_queries},
            {"max_queries", g.max_queries}};
}

json to_json(const RunConfig& c) {
    return {{"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"loss", to_json(c.train.loss)},
            {"generator", to_json(c.generator)},
            {"seed", c.seed ? json(*c.seed) : json(nullptr)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    check_keys(j, to_json(c), "model");
    read(j, "vocab_size", c.vocab_size, "model");
    read(j, "model_dim", c.model_dim, "model");
    read(j, "n_heads", c.n_heads, "model");
    read(j, "n_layers", c.n_layers, "model");
    read(j, "ffn_dim", c.ffn_dim, "model");
    read(j, "video_feature_dim", c.video_feature_dim, "model");
    read(j, "max_video_tokens", c.max_video_tokens, "model");
    read(j, "max_text_tokens", c.max_text_tokens, "model");
    read(j, "decoder_layers", c.decoder_layers, "model");
    read(j, "decoder_heads", c.decoder_heads, "model");
    read(j, "decoder_hidden", c.decoder_hidden, "model");
    read(j, "decoder_ffn_dim", c.decoder_ffn_dim, "model");
    read(j, "decoder_mlp_dims", c.decoder_mlp_dims, "model");
    read(j, "zero_init_decoder_head", c.zero_init_decoder_head, "model");
    read(j, "seed", c.seed, "model");
    return c;
}

TrainConfig train_config_from_json(const json& train, const json& loss) {
    TrainConfig c = TrainConfig::toy();
    check_keys(train, to_json(c), "train");
    check_keys(loss, to_json(c.loss), "loss");
    read(train, "batch_size", c.batch_size, "train");
    read(train, "epochs", c.epochs, "train");
    read(train, "max_steps", c.max_steps, "train");
    read(train, "peak_lr", c.peak_lr, "train");
    read(train, "start_lr", c.start_lr, "train");
    read(train, "end_lr", c.end_lr, "train");
    read(train, "warmup_fraction", c.warmup_fraction, "train");
    read(train, "adam_beta1", c.adam_beta1, "train");
    read(train, "adam_beta2", c.adam_beta2, "train");
    read(train, "adam_eps", c.adam_eps, "train");
    read(train, "weight_decay", c.weight_decay, "train");
    read(train, "vpg_mil_passes", c.vpg_mil_passes, "train");
    read(train, "seed", c.seed, "train");
    read(train, "max_skip_fraction", c.max_skip_fraction, "train");
    std::string mode = to_string(c.mode);
    read(train, "mode", mode, "train");
    c.mode = wrap("train.mode", [&] { return parse_train_mode(mode); });
    read(loss, "lambda_lm", c.loss.lambda_lm, "loss");
    read(loss, "lambda_l1", c.loss.lambda_l1, "loss");
    read(loss, "lambda_giou", c.loss.lambda_giou, "loss");
    return c;
}

GeneratorSpec generator_spec_from_json(const json& j) {
    GeneratorSpec g;
    check_keys(j, to_json(g), "generator");
    read(j, "n_samples", g.n_samples, "generator");
    std::string task = to_string(g.task);
    read(j, "task", task, "generator");
    g.task = wrap("generator.task", [&] { return parse_task(task); });
    read(j, "n_event_types", g.n_event_types, "generator");
    read(j, "num_tokens", g.num_tokens, "generator");
    read(j, "feature_dim", g.feature_dim, "generator");
    read(j, "ambiguity_rate", g.ambiguity_rate, "generator");
    read(j, "corruption_rate", g.corruption_rate, "generator");
    read(j, "point_rate", g.point_rate, "generator");
    read(j, "negative_rate", g.negative_rate, "generator");
    read(j, "seed", g.seed, "generator");
    read(j, "world_seed", g.world_seed, "generator");
    read(j, "noise_std", g.noise_std, "generator");
    read(j, "min_run", g.min_run, "generator");
    read(j, "max_run", g.max_run, "generator");
    read(j, "min_queries", g.min_queries, "generator");
    read(j, "max_queries", g.max_queries, "generator");
    return g;
}

RunConfig run_config_from_json(const json& j) {
    json merged = to_json(RunConfig{});
    merge_strict(merged, j, "");
    RunConfig c;
    c.model = model_config_from_json(merged["model"]);
    c.train = train_config_from_json(merged["train"], merged["loss"]);
    c.generator = generator_spec_from_json(merged["generator"]);
    if (!merged["seed"].is_null()) {
        if (!merged["seed"].is_number_unsigned()) throw ConfigError("config key 'seed' must be a non-negative integer");
        c.seed = merged["seed"].get<std::uint64_t>();
        c.model.seed = c.train.seed = c.generator.seed = *c.seed;
    }
    return c;
}

void RunConfig::validate() const {
    wrap("model", [&] { model.validate(); return 0; });
    wrap("train", [&] { train.validate(); return 0; });
    wrap("generator", [&] { generator.validate(); return 0; });
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) throw ConfigError("empty override key");
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    json* node = &j;
    std::size_t pos = 0;
    for (;;) {
        const auto dot = dotted_key.find('.', pos);
        const std::string part = dotted_key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = std::move(parsed);
            return;
        }
        node = &(*node)[part];
        pos = dot + 1;
    }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
    json j = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError(path->string() + ": malformed JSON: " + e.what());
        }
    }
    for (const auto& [k, v] : overrides) apply_override(j, k, v);
    RunConfig c = run_config_from_json(j);
    c.validate();
    return c;
}

}  // namespace edvtg
