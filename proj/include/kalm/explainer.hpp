#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "kalm/autodiff.hpp"
#include "kalm/knowledge.hpp"
#include "kalm/reasoner.hpp"
#include "kalm/text.hpp"

namespace kalm {

/// One attention edge from a token query position to a token or knowledge
/// position of the fused matrix.
struct ChainStep {
    std::size_t source_index = 0;
    std::string source_text;
    std::size_t target_index = 0;  // position in the fused matrix
    bool target_is_fragment = false;
    std::string target_text;  // token text, or fragment id for knowledge targets
    double weight = 0.0;
};

struct EvidenceLink {
    std::string fragment_id;
    double weight = 0.0;
};

struct ReasoningChain {
    std::vector<ChainStep> steps;
    std::vector<EvidenceLink> evidence;
};

struct Rationale {
    std::string text;
    std::vector<std::string> cited_fragment_ids;
};

struct FactScoreValue {
    double value = 0.0;
    std::size_t supported = 0;
    std::size_t total = 0;
};

inline constexpr double kAttributionEpsilon = 1e-9;

/// Head-averages `attn`, keeps token query rows, drops self edges and returns
/// the `max_edges` heaviest edges (ties by source then target index).
ReasoningChain extract_chain(const AttentionWeights& attn, const RetrievalResult& retrieval,
                             const TokenSequence& tokens, std::size_t max_edges);

/// Mean attention mass of token rows on each knowledge position, smoothed by
/// 1e-9 and renormalised. Empty when there are no knowledge positions.
std::vector<double> knowledge_attribution(const AttentionWeights& attn, std::size_t n_tokens);

struct ExplainLossParts {
    double kl = 0.0;
    double entropy = 0.0;
    double total = 0.0;
};

/// KL(a_kb || w) + beta * mean entropy of head-averaged token rows, on the tape.
Var explain_loss(Tape& tape, const std::vector<Var>& attention, std::size_t n_tokens,
                 const RetrievalResult& retrieval, double beta);

/// Plain evaluation; n_tokens = rows - retrieval.size().
ExplainLossParts explain_loss(const AttentionWeights& attn, const RetrievalResult& retrieval,
                              double beta);

/// Four decimals, round-half-even on the exact binary value.
std::string format_weight(double w);

/// `predicted <label> because "<source>" attends to "<target>" (w=<weight>)`
std::string step_sentence(const std::string& label, const std::string& source,
                          const std::string& target, double weight);
/// `supported by <id>: "<text>"`
std::string evidence_sentence(const std::string& fragment_id, const std::string& text);

/// One line per chain step followed by one line per evidence link.
Rationale render_rationale(const ReasoningChain& chain, const Prediction& pred,
                           const KnowledgeBase& kb);

FactScoreValue fact_score(const Rationale& rationale, const RetrievalResult& retrieval,
                          const KnowledgeBase& kb, double overlap_threshold = 0.5);

nlohmann::json explanation_to_json(const Prediction& pred, const ReasoningChain& chain,
                                   const Rationale& rationale);

}  // namespace kalm
