#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kalm/encoder.hpp"

namespace kalm {

/// One line of a knowledge file: {"id": ..., "text": ...}.
struct FragmentRecord {
    std::string id;
    std::string text;
    bool operator==(const FragmentRecord&) const = default;
};

struct KnowledgeFragment {
    std::string id;
    std::string text;
    std::vector<double> vector;
};

/// Immutable-after-build list of fragments sharing one dimension.
class KnowledgeBase {
 public:
    explicit KnowledgeBase(std::size_t dimension = 0) : dimension_(dimension) {}

    /// Rejects duplicate ids, dimension mismatches, non-finite or zero vectors.
    void add(KnowledgeFragment fragment);

    std::size_t size() const { return fragments_.size(); }
    bool empty() const { return fragments_.empty(); }
    std::size_t dimension() const { return dimension_; }
    const std::vector<KnowledgeFragment>& fragments() const { return fragments_; }
    const KnowledgeFragment& at(std::size_t index) const { return fragments_.at(index); }
    /// Position of `id`, if present.
    std::optional<std::size_t> find(const std::string& id) const;

 private:
    std::size_t dimension_;
    std::vector<KnowledgeFragment> fragments_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct RetrievalResult {
    std::vector<std::string> fragment_ids;
    std::vector<std::size_t> positions;  // indices into the KnowledgeBase
    std::vector<double> similarities;
    std::vector<double> weights;

    std::size_t size() const { return fragment_ids.size(); }
};

/// Encodes every record with the frozen encoder: vector = pool(encode(text)).
KnowledgeBase ingest(const std::vector<FragmentRecord>& records, const EncoderParams& encoder,
                     const Vocabulary& vocab);

double cosine_sim(std::span<const double> h, std::span<const double> k);

/// Exact top-k by cosine similarity (ties by ascending id) with weights
/// softmax(similarity / tau) over the selected set.
RetrievalResult retrieve(std::span<const double> query, const KnowledgeBase& kb,
                         std::size_t top_k, double tau);

/// softmax(values / tau) with max subtraction.
std::vector<double> temperature_softmax(std::span<const double> values, double tau);

/// Line-delimited JSON with id and text; an optional "fields" object is
/// appended to the text as key=value tokens.
std::vector<FragmentRecord> load_knowledge_file(const std::filesystem::path& path);
void save_knowledge_file(const std::filesystem::path& path,
                         const std::vector<FragmentRecord>& records);

}  // namespace kalm
