#include "kalm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <string_view>
#include <unordered_set>

#include "json.hpp"
#include "kalm/errors.hpp"
#include "kalm/explainer.hpp"
#include "structured_fields.hpp"

namespace kalm {

std::vector<std::string> label_set(const std::vector<CorpusExample>& corpus) {
    std::set<std::string> labels;
    for (const auto& e : corpus) labels.insert(e.label);
    return {labels.begin(), labels.end()};
}

std::vector<CorpusExample> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read corpus file " + path.string());
    std::vector<CorpusExample> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        CorpusExample ex;
        try {
            const auto j = nlohmann::json::parse(line);
            ex.id = j.at("id").get<std::string>();
            ex.text = text_with_fields(j);
            ex.label = j.at("label").get<std::string>();
            if (auto it = j.find("reference_explanation"); it != j.end() && !it->is_null()) {
                ex.reference_explanation = it->get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (ex.text.find_first_not_of(" \t\r\n") == std::string::npos) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": empty text");
        }
        if (!ids.insert(ex.id).second) {
            throw DataError(path.string() + " line " + std::to_string(line_no) +
                            ": duplicate example id '" + ex.id + "'");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<CorpusExample>& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file " + path.string());
    for (const auto& e : corpus) {
        nlohmann::ordered_json j{{"id", e.id}, {"text", e.text}, {"label", e.label}};
        if (e.reference_explanation) j["reference_explanation"] = *e.reference_explanation;
        out << j.dump() << '\n';
    }
}

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::size_t kSyllables = 14 * 5;
constexpr std::size_t kWordSpace = kSyllables * kSyllables * kSyllables;

std::string three_syllables(std::size_t x) {
    std::string w;
    for (int i = 0; i < 3; ++i) {
        const std::size_t s = x % kSyllables;
        x /= kSyllables;
        w += kConsonants[s / kVowels.size()];
        w += kVowels[s % kVowels.size()];
    }
    return w;
}

}  // namespace

std::size_t synthetic_word_pool(std::size_t num_entities) {
    std::size_t pool = std::max<std::size_t>(10, num_entities / 10);
    while (pool * pool < num_entities) ++pool;
    return pool;
}

std::string synthetic_entity_name(std::size_t index, std::size_t pool) {
    if (3 * pool >= kWordSpace || index >= pool * pool) {
        throw ConfigError("synthetic entity index out of range for the word pool");
    }
    // Entity (x, y) takes word x from the first bank, y from the second and
    // x + y from the third, so two entities share at most one word.
    const std::size_t x = index % pool;
    const std::size_t y = index / pool;
    // 104729 is coprime with kWordSpace, so distinct slots give distinct words.
    auto word = [](std::size_t slot) { return three_syllables((slot * 104729 + 12345) % kWordSpace); };
    return word(x) + " " + word(pool + y) + " " + word(2 * pool + (x + y) % pool);
}

std::string synthetic_fragment_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "kb-%03zu", index);
    return buf;
}

std::string synthetic_example_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ex-%03zu", index);
    return buf;
}

SyntheticData generate_synthetic(std::size_t num_entities, double train_fraction,
                                 std::uint64_t seed) {
    if (num_entities < 10) throw ConfigError("synthetic corpus needs at least 10 entities");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);

    SyntheticData data;
    std::vector<CorpusExample> examples;
    const std::size_t pool = synthetic_word_pool(num_entities);
    for (std::size_t i = 0; i < num_entities; ++i) {
        const std::string entity = synthetic_entity_name(i, pool);
        const std::string frag_id = synthetic_fragment_id(i);
        const bool strong = coin(rng);
        const std::string frag_text = entity + " outlook " + (strong ? "strong" : "weak");
        data.knowledge.push_back({frag_id, frag_text});

        CorpusExample ex;
        ex.id = synthetic_example_id(i);
        ex.text = "report on " + entity + " today";
        ex.label = strong ? "positive" : "negative";
        ex.reference_explanation =
            step_sentence(ex.label, tokenize(entity).front(), frag_id, 1.0) + "\n" + evidence_sentence(frag_id, frag_text);
        examples.push_back(std::move(ex));
    }

    std::vector<std::size_t> order(num_entities);
    for (std::size_t i = 0; i < num_entities; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(num_entities)));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    for (auto i : train_idx) data.train.push_back(examples[i]);
    for (auto i : test_idx) data.test.push_back(examples[i]);
    return data;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
    save_corpus(dir / "train.jsonl", data.train);
    save_corpus(dir / "test.jsonl", data.test);
    save_knowledge_file(dir / "kb.jsonl", data.knowledge);
}

}  // namespace kalm
