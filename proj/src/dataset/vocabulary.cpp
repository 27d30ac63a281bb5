// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <sstream>

#include "edvtg/dataset.hpp"

namespace edvtg {

std::string to_string(Task t) {
    switch (t) {
        case Task::stg: return "stg";
        case Task::vpg: return "vpg";
        case Task::qg: return "qg";
        case Task::ag: return "ag";
    }
    return "?";
}

Task parse_task(std::string_view name) {
    if (name == "stg") return Task::stg;
    if (name == "vpg") return Task::vpg;
    if (name == "qg") return Task::qg;
    if (name == "ag") return Task::ag;
    throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected stg, vpg, qg or ag)");
}

int tok::task_prefix(Task t) {
    switch (t) {
        case Task::stg: return task_stg;
        case Task::vpg: return task_vpg;
        case Task::qg: return task_qg;
        case Task::ag: return task_ag;
    }
    return task_stg;
}

Vocabulary::Vocabulary()
    : tokens_{"<PAD>", "<BOS>", "<EOS>", "<INT>", "<PNT>", "<NOGRND>", "<SEP>", "<STG>", "<VPG>", "<QG>", "<AG>"} {}

Vocabulary Vocabulary::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.find_first_of(" \t") != std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": token must be a non-empty word");
        }
        if (v.find(line)) throw DataError(path.string() + ":" + std::to_string(n) + ": duplicate token '" + line + "'");
        v.tokens_.push_back(line);
    }
    const Vocabulary reserved;
    for (std::size_t i = 0; i < reserved.size(); ++i) {
        if (i >= v.size() || v.tokens_[i] != reserved.tokens_[i]) {
            throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected reserved token " +
                            reserved.tokens_[i]);
        }
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    const Vocabulary reserved;
    if (tokens.size() < reserved.size() ||
        !std::equal(reserved.tokens_.begin(), reserved.tokens_.end(), tokens.begin())) {
        throw DataError("vocabulary does not start with the reserved tokens");
    }
    Vocabulary v;
    for (std::size_t i = reserved.size(); i < tokens.size(); ++i) {
        if (v.find(tokens[i])) throw DataError("duplicate token '" + tokens[i] + "'");
        v.tokens_.push_back(tokens[i]);
    }
    return v;
}

void Vocabulary::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

int Vocabulary::add(const std::string& token) {
    if (auto id = find(token)) return *id;
    tokens_.push_back(token);
    return static_cast<int>(tokens_.size() - 1);
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DataError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view token) const {
    auto it = std::find(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end()) return std::nullopt;
    return static_cast<int>(it - tokens_.begin());
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
    std::vector<int> ids;
    std::istringstream is{std::string(text)};
    std::string word;
    while (is >> word) {
        auto id = find(word);
        if (!id) throw DataError("unknown word '" + word + "'");
        ids.push_back(*id);
    }
    return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

}  // namespace edvtg
