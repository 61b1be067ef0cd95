#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kalm/knowledge.hpp"

namespace kalm {

struct CorpusExample {
    std::string id;
    std::string text;
    std::string label;
    std::optional<std::string> reference_explanation;

    bool operator==(const CorpusExample&) const = default;
};

/// Sorted distinct labels.
std::vector<std::string> label_set(const std::vector<CorpusExample>& corpus);

/// Line-delimited JSON with fields id, text, label and optional
/// reference_explanation. An optional "fields" object is appended to the
/// text as key=value tokens. Errors cite the offending line number.
std::vector<CorpusExample> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const std::vector<CorpusExample>& corpus);

/// Knowledge-dependent stand-in task: one entity per example, the label is
/// only stated in that entity's knowledge fragment, and train/test entities
/// are disjoint.
struct SyntheticData {
    std::vector<CorpusExample> train;
    std::vector<CorpusExample> test;
    std::vector<FragmentRecord> knowledge;
};

SyntheticData generate_synthetic(std::size_t num_entities, double train_fraction,
                                 std::uint64_t seed);

/// Writes train.jsonl, test.jsonl and kb.jsonl under `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

/// Size of each of the three word banks entity names are drawn from; every
/// word occurs in about ten entity names.
std::size_t synthetic_word_pool(std::size_t num_entities);
/// One word per bank; two entities share at most one word.
std::string synthetic_entity_name(std::size_t index, std::size_t pool);
std::string synthetic_fragment_id(std::size_t index);
std::string synthetic_example_id(std::size_t index);

}  // namespace kalm
