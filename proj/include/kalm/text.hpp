#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kalm {

/// Lowercases, splits on whitespace and emits every ASCII punctuation
/// character as its own token. Runs of letters/digits (and non-ASCII bytes)
/// stay together. Throws EmptyInputError on blank input.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces; tokenize(join_tokens(t)) == t.
std::string join_tokens(const std::vector<std::string>& tokens);

/// Appends " key=value" for each structured field, in the given order.
std::string append_fields(std::string text,
                          const std::vector<std::pair<std::string, std::string>>& fields);

class Vocabulary {
 public:
    static constexpr std::size_t kUnkId = 0;
    static constexpr std::string_view kUnkToken = "<unk>";

    Vocabulary();
    /// Rebuilds from an id-ordered token list whose first entry is UNK.
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    std::size_t size() const { return id_to_token_.size(); }
    std::size_t id(std::string_view token) const;
    const std::string& token(std::size_t id) const;
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

    bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

 private:
    void add(std::string token);

    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// Ids by descending frequency, ties lexicographic; UNK is id 0.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus);

struct TokenSequence {
    std::vector<std::size_t> ids;
    std::vector<std::string> tokens;
    std::string source_text;

    std::size_t size() const { return ids.size(); }
};

TokenSequence make_sequence(std::string_view text, const Vocabulary& vocab);

}  // namespace kalm
