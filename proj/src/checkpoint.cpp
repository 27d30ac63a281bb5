// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>

#include "edvtg/checkpoint.hpp"
#include "edvtg/config.hpp"

namespace edvtg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'D', 'V', 'T', 'G', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path, const char* what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError(path + ": truncated " + what);
    return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in, std::size_t n, const std::string& path, const std::string& what) {
    std::vector<double> v(n);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
        throw CheckpointError(path + ": truncated payload in " + what);
    }
    return v;
}

}  // namespace

Checkpoint Checkpoint::capture(const GroundingModel& model) {
    Checkpoint c;
    c.model = model.config();
    c.seed = model.config().seed;
    for (const auto& p : model.parameters()) {
        const auto d = p.tensor.data();
        c.params.push_back({p.name, p.tensor.shape(), p.decay, std::vector<double>(d.begin(), d.end())});
    }
    return c;
}

GroundingModel Checkpoint::restore_model() const {
    GroundingModel m(model);
    const auto& expected = m.parameters();
    if (expected.size() != params.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(params.size()) + " parameters, config implies " +
                              std::to_string(expected.size()));
    }
    std::vector<std::pair<std::string, std::vector<double>>> values;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape != expected[i].tensor.shape()) {
            throw CheckpointError("parameter " + params[i].name + " has shape " + ad::shape_str(params[i].shape) +
                                  ", config implies " + ad::shape_str(expected[i].tensor.shape()));
        }
        values.emplace_back(params[i].name, params[i].values);
    }
    try {
        m.load_values(values);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
    return m;
}

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    json table = json::array();
    for (const auto& p : c.params) table.push_back({{"name", p.name}, {"shape", p.shape}, {"decay", p.decay}});
    json header = {{"model", to_json(c.model)},
                   {"train", c.train_config},
                   {"vocab", c.vocab},
                   {"seed", c.seed},
                   {"step", c.step},
                   {"epoch", c.epoch},
                   {"params", std::move(table)},
                   {"optimizer", c.has_optimizer},
                   {"adam_t", c.adam_t}};
    const std::string text = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof(kMagic));
        put<std::uint32_t>(out, checkpoint_version);
        put<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& p : c.params) put_doubles(out, p.values);
        if (c.has_optimizer) {
            for (const auto& m : c.adam_m) put_doubles(out, m);
            for (const auto& v : c.adam_v) put_doubles(out, v);
        }
        if (!out) throw CheckpointError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const std::string where = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + where);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError(where + ": not a checkpoint file (bad magic)");
    }
    const auto version = get<std::uint32_t>(in, where, "version");
    if (version != checkpoint_version) {
        throw CheckpointError(where + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = get<std::uint64_t>(in, where, "header length");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError(where + ": truncated header");

    Checkpoint c;
    std::vector<std::size_t> sizes;
    try {
        const json h = json::parse(text);
        c.model = model_config_from_json(h.at("model"));
        c.train_config = h.at("train");
        c.vocab = h.at("vocab").get<std::vector<std::string>>();
        c.seed = h.at("seed").get<std::uint64_t>();
        c.step = h.at("step").get<std::uint64_t>();
        c.epoch = h.at("epoch").get<std::uint64_t>();
        c.has_optimizer = h.at("optimizer").get<bool>();
        c.adam_t = h.at("adam_t").get<std::uint64_t>();
        for (const auto& p : h.at("params")) {
            ParamBlob b;
            b.name = p.at("name").get<std::string>();
            b.shape = p.at("shape").get<ad::Shape>();
            b.decay = p.at("decay").get<bool>();
            sizes.push_back(ad::shape_numel(b.shape));
            c.params.push_back(std::move(b));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(where + ": bad header: " + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(where + ": bad header: " + e.what());
    }
    for (std::size_t i = 0; i < c.params.size(); ++i) c.params[i].values = get_doubles(in, sizes[i], where, c.params[i].name);
    if (c.has_optimizer) {
        for (std::size_t i = 0; i < sizes.size(); ++i) c.adam_m.push_back(get_doubles(in, sizes[i], where, "adam m"));
        for (std::size_t i = 0; i < sizes.size(); ++i) c.adam_v.push_back(get_doubles(in, sizes[i], where, "adam v"));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(where + ": trailing bytes after payload");
    return c;
}

}  // namespace edvtg
