#include "rnnc/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rnnc/errors.hpp"

namespace rnnc {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Calls fn(token) for every whitespace-separated token and fn("\n") at the
// end of every line. A trailing newline does not open an empty final line.
template <typename Fn>
void scan_tokens(std::string_view text, Fn&& fn) {
    std::size_t pos = 0;
    const std::size_t len = text.size();
    while (pos < len) {
        std::size_t eol = text.find('\n', pos);
        const bool last = eol == std::string_view::npos;
        std::string_view line = text.substr(pos, last ? len - pos : eol - pos);
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && is_space(line[i])) ++i;
            std::size_t start = i;
            while (i < line.size() && !is_space(line[i])) ++i;
            if (i > start) fn(line.substr(start, i - start), false);
        }
        fn(std::string_view{}, true);
        if (last) break;
        pos = eol + 1;
    }
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> id_to_token) : id_to_token_(std::move(id_to_token)) {
    token_to_id_.reserve(id_to_token_.size());
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<std::int32_t>(i));
        if (!inserted) throw VocabError("duplicate vocabulary token: " + id_to_token_[i]);
    }
    auto unk = token_to_id_.find(kUnk);
    auto eos = token_to_id_.find(kEos);
    if (unk == token_to_id_.end() || eos == token_to_id_.end()) {
        throw VocabError("vocabulary is missing a reserved token (<unk>/<eos>)");
    }
    unk_id_ = unk->second;
    eos_id_ = eos->second;
}

std::int32_t Vocabulary::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(id_to_token_.size()));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocab(std::string_view corpus, std::size_t max_size) {
    if (max_size < 2) {
        throw ArgumentError("vocabulary max_size " + std::to_string(max_size) +
                            " cannot hold the reserved tokens");
    }
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t total = 0;
    scan_tokens(corpus, [&](std::string_view tok, bool eol) {
        if (eol) return;
        ++total;
        ++counts[std::string(tok)];
    });
    if (total == 0) throw IngestionError("corpus contains no tokens");

    counts.erase(Vocabulary::kUnk);
    counts.erase(Vocabulary::kEos);

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<std::string> id_to_token;
    id_to_token.reserve(std::min(max_size, ranked.size() + 2));
    id_to_token.emplace_back(Vocabulary::kUnk);
    id_to_token.emplace_back(Vocabulary::kEos);
    for (const auto& [tok, cnt] : ranked) {
        if (id_to_token.size() >= max_size) break;
        id_to_token.push_back(tok);
    }
    return Vocabulary(std::move(id_to_token));
}

TokenStream encode(const Vocabulary& vocab, std::string_view text) {
    TokenStream out;
    scan_tokens(text, [&](std::string_view tok, bool eol) {
        out.push_back(eol ? vocab.eos_id() : vocab.id(tok));
    });
    return out;
}

std::string decode(const Vocabulary& vocab, const TokenStream& stream) {
    std::string out;
    bool line_start = true;
    for (std::int32_t id : stream) {
        if (id == vocab.eos_id()) {
            out += '\n';
            line_start = true;
            continue;
        }
        if (!line_start) out += ' ';
        out += vocab.token(id);
        line_start = false;
    }
    return out;
}

void save_vocab_file(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open vocabulary file for writing: " + path);
    for (const auto& tok : vocab.tokens()) out << tok << '\n';
    if (!out) throw StorageError("failed writing vocabulary file: " + path);
}

Vocabulary load_vocab_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

}  // namespace rnnc
