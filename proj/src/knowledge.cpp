#include "kalm/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "kalm/errors.hpp"
#include "structured_fields.hpp"

namespace kalm {

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

void KnowledgeBase::add(KnowledgeFragment fragment) {
    if (index_.count(fragment.id)) throw DataError("duplicate knowledge fragment id '" + fragment.id + "'");
    if (dimension_ == 0 && fragments_.empty()) dimension_ = fragment.vector.size();
    if (fragment.vector.size() != dimension_) {
        throw DimensionError("fragment '" + fragment.id + "' has dimension " +
                             std::to_string(fragment.vector.size()) + ", expected " +
                             std::to_string(dimension_));
    }
    if (!std::all_of(fragment.vector.begin(), fragment.vector.end(),
                     [](double v) { return std::isfinite(v); })) {
        throw NumericError("fragment '" + fragment.id + "' has a non-finite vector");
    }
    if (norm(fragment.vector) == 0.0) {
        throw DataError("fragment '" + fragment.id + "' has a zero vector");
    }
    index_.emplace(fragment.id, fragments_.size());
    fragments_.push_back(std::move(fragment));
}

std::optional<std::size_t> KnowledgeBase::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

KnowledgeBase ingest(const std::vector<FragmentRecord>& records, const EncoderParams& encoder,
                     const Vocabulary& vocab) {
    if (records.empty()) throw DataError("knowledge base has no fragments");
    KnowledgeBase kb(encoder.d_model());
    for (const auto& r : records) {
        if (kb.find(r.id)) throw DataError("duplicate knowledge fragment id '" + r.id + "'");
        TokenSequence seq;
        try {
            seq = make_sequence(r.text, vocab);
        } catch (const EmptyInputError&) {
            throw DataError("knowledge fragment '" + r.id + "' has empty text");
        }
        kb.add({r.id, r.text, pool(encode(encoder, seq))});
    }
    return kb;
}

double cosine_sim(std::span<const double> h, std::span<const double> k) {
    if (h.size() != k.size()) {
        throw DimensionError("cosine_sim length mismatch: " + std::to_string(h.size()) + " vs " +
                             std::to_string(k.size()));
    }
    const double nh = norm(h);
    const double nk = norm(k);
    if (nh == 0.0 || nk == 0.0) throw NumericError("cosine_sim of a zero-norm vector");
    const double dot = std::inner_product(h.begin(), h.end(), k.begin(), 0.0);
    return std::clamp(dot / (nh * nk), -1.0, 1.0);
}

std::vector<double> temperature_softmax(std::span<const double> values, double tau) {
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    std::vector<double> out(values.size());
    if (values.empty()) return out;
    const double mx = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::exp((values[i] - mx) / tau);
        sum += out[i];
    }
    for (double& w : out) w /= sum;
    return out;
}

RetrievalResult retrieve(std::span<const double> query, const KnowledgeBase& kb,
                         std::size_t top_k, double tau) {
    if (kb.empty()) throw DataError("cannot retrieve from an empty knowledge base");
    if (top_k == 0) throw ConfigError("top_k must be >= 1");
    if (norm(query) == 0.0) throw NumericError("retrieval query has zero norm");

    const auto& frags = kb.fragments();
    std::vector<double> sims(frags.size());
    for (std::size_t i = 0; i < frags.size(); ++i) sims[i] = cosine_sim(query, frags[i].vector);

    std::vector<std::size_t> order(frags.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = std::min(top_k, frags.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (sims[a] != sims[b]) return sims[a] > sims[b];
                          return frags[a].id < frags[b].id;
                      });

    RetrievalResult r;
    for (std::size_t i = 0; i < k; ++i) {
        r.positions.push_back(order[i]);
        r.fragment_ids.push_back(frags[order[i]].id);
        r.similarities.push_back(sims[order[i]]);
    }
    r.weights = temperature_softmax(r.similarities, tau);
    return r;
}

std::vector<FragmentRecord> load_knowledge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read knowledge file " + path.string());
    std::vector<FragmentRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), text_with_fields(j)});
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_knowledge_file(const std::filesystem::path& path,
                         const std::vector<FragmentRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write knowledge file " + path.string());
    for (const auto& r : records) out << nlohmann::json{{"id", r.id}, {"text", r.text}}.dump() << '\n';
}

}  // namespace kalm
