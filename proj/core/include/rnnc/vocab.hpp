#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rnnc {

using TokenStream = std::vector<std::int32_t>;

// Word-level vocabulary. Ids are contiguous 0..size()-1 with the reserved
// tokens "<unk>" and "<eos>" always present at ids 0 and 1. The remaining
// tokens are ordered by descending corpus frequency, ties broken
// lexicographically, so construction is deterministic.
class Vocabulary {
  public:
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kEos = "<eos>";

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> id_to_token);

    std::size_t size() const { return id_to_token_.size(); }
    std::int32_t unk_id() const { return unk_id_; }
    std::int32_t eos_id() const { return eos_id_; }

    // unk_id for out-of-vocabulary tokens.
    std::int32_t id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(std::int32_t id) const;
    const std::vector<std::string>& tokens() const { return id_to_token_; }

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::int32_t> token_to_id_;
    std::int32_t unk_id_ = 0;
    std::int32_t eos_id_ = 0;
};

// Most frequent whitespace tokens of `corpus`, capped at max_size entries
// including the two reserved tokens. Throws IngestionError on a corpus with
// no tokens and ArgumentError if max_size cannot hold the reserved tokens.
Vocabulary build_vocab(std::string_view corpus, std::size_t max_size);

// Whitespace tokenization, one "<eos>" appended per line, OOV mapped to
// unk_id. Total on text: "" encodes to the empty stream.
TokenStream encode(const Vocabulary& vocab, std::string_view text);

// Inverse of encode on in-vocabulary text: tokens joined by single spaces,
// "<eos>" rendered as a newline.
std::string decode(const Vocabulary& vocab, const TokenStream& stream);

// Token-per-line text file, line number == id.
void save_vocab_file(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab_file(const std::string& path);

std::string read_text_file(const std::string& path);

}  // namespace rnnc
