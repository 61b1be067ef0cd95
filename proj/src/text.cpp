#include "kalm/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "kalm/errors.hpp"

namespace kalm {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    if (out.empty()) throw EmptyInputError("text is empty after trimming");
    return out;
}

std::string append_fields(std::string text,
                          const std::vector<std::pair<std::string, std::string>>& fields) {
    for (const auto& [key, value] : fields) text += " " + key + "=" + value;
    return text;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() { add(std::string(kUnkToken)); }

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.empty() || id_to_token.front() != kUnkToken) {
        throw DataError("vocabulary must start with " + std::string(kUnkToken));
    }
    Vocabulary v;
    for (std::size_t i = 1; i < id_to_token.size(); ++i) {
        if (v.token_to_id_.count(id_to_token[i])) {
            throw DataError("duplicate vocabulary token '" + id_to_token[i] + "'");
        }
        v.add(std::move(id_to_token[i]));
    }
    return v;
}

void Vocabulary::add(std::string token) {
    token_to_id_.emplace(token, id_to_token_.size());
    id_to_token_.push_back(std::move(token));
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= id_to_token_.size()) {
        throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus) {
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : corpus)
        for (const auto& t : doc)
            if (t != Vocabulary::kUnkToken) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken)};
    for (auto& [tok, n] : ranked) tokens.push_back(tok);
    return Vocabulary::from_tokens(std::move(tokens));
}

TokenSequence make_sequence(std::string_view text, const Vocabulary& vocab) {
    TokenSequence seq;
    seq.source_text = std::string(text);
    seq.tokens = tokenize(text);
    seq.ids = vocab.encode(seq.tokens);
    return seq;
}

}  // namespace kalm
