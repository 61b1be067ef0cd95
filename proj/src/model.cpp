#include "kalm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kalm/errors.hpp"

namespace kalm {

Model::Model(TrainConfig cfg, Vocabulary vocab, std::vector<std::string> labels)
    : config_(std::move(cfg)), vocab_(std::move(vocab)), labels_(std::move(labels)) {
    config_.validate();
    if (labels_.empty()) throw ConfigError("label set is empty");
    std::mt19937_64 rng(config_.seed);
    encoder = EncoderParams::init(vocab_.size(), config_.d_model, config_.position_scale, rng,
                                  config_.encoder_init_scale);
    reasoner = AttentionParams::init(config_.d_model, config_.heads, rng);
    classifier = ClassifierParams::init(config_.d_model, labels_.size(), rng);
}

std::size_t Model::label_index(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw DataError("label '" + label + "' not in the model label set");
    return static_cast<std::size_t>(it - labels_.begin());
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out = encoder.parameters();
    for (Parameter* p : reasoner.parameters()) out.push_back(p);
    for (Parameter* p : classifier.parameters()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> Model::parameters() const {
    std::vector<const Parameter*> out = encoder.parameters();
    for (std::size_t h = 0; h < reasoner.heads(); ++h) {
        out.push_back(&reasoner.w_q[h]);
        out.push_back(&reasoner.w_k[h]);
        out.push_back(&reasoner.w_v[h]);
    }
    out.push_back(&reasoner.w_o);
    out.push_back(&classifier.w);
    out.push_back(&classifier.b);
    return out;
}

std::vector<double> Model::learning_rate_scales() const {
    std::vector<double> scales(parameters().size(), 1.0);
    std::fill_n(scales.begin(), encoder.parameters().size(), config_.encoder_lr_scale);
    return scales;
}

KnowledgeBase Model::ingest(const std::vector<FragmentRecord>& records) const {
    return kalm::ingest(records, encoder, vocab_);
}

AttentionWeights ForwardPass::attention_weights() const {
    AttentionWeights w;
    for (Var a : attention) w.heads.push_back(tape.value(a));
    return w;
}

std::vector<double> ForwardPass::query() const { return pool(tape.value(context)); }

ForwardPass forward(const Model& model, const KnowledgeBase& kb, std::string_view text,
                    std::optional<std::size_t> target, const RetrievalResult* fixed_retrieval) {
    const TrainConfig& cfg = model.config();
    ForwardPass f;
    f.tokens = make_sequence(text, model.vocab());
    f.context = encode(f.tape, model.encoder, f.tokens.ids);
    f.retrieval = fixed_retrieval ? *fixed_retrieval
                                  : retrieve(f.query(), kb, cfg.top_k, cfg.tau);
    f.fused = fuse(f.tape, f.context, f.retrieval, kb, cfg.alpha);
    ReasonVars r = reason(f.tape, f.fused, model.reasoner);
    f.attention = std::move(r.attention);
    f.z_out = r.z_out;
    f.probs = predict(f.tape, f.z_out, f.tokens.size(), model.classifier);
    f.prediction = make_prediction(f.tape.value(f.probs).row(0), model.labels());

    if (target) {
        f.task_loss = f.tape.cross_entropy(f.probs, *target);
        f.explain_loss = kalm::explain_loss(f.tape, f.attention, f.tokens.size(), f.retrieval,
                                            cfg.beta);
        f.total_loss = f.tape.add(f.task_loss, f.tape.scale(f.explain_loss, cfg.lambda));
        LossBreakdown l;
        l.task = f.tape.value(f.task_loss)(0, 0);
        l.explain = f.tape.value(f.explain_loss)(0, 0);
        l.total = f.tape.value(f.total_loss)(0, 0);
        f.losses = l;
    }
    return f;
}

LossBreakdown total_loss(const CorpusExample& example, const Model& model,
                         const KnowledgeBase& kb) {
    return *forward(model, kb, example.text, model.label_index(example.label)).losses;
}

GradCheckReport grad_check(Model& model, const CorpusExample& example, const KnowledgeBase& kb,
                           double perturbation) {
    const std::size_t target = model.label_index(example.label);
    const RetrievalResult fixed = forward(model, kb, example.text).retrieval;
    auto params = model.parameters();
    auto loss = [&] { return forward(model, kb, example.text, target, &fixed).losses->total; };
    auto gradients = [&] {
        ForwardPass f = forward(model, kb, example.text, target, &fixed);
        f.tape.backward(f.total_loss, params);
    };
    return grad_check(params, loss, gradients, perturbation);
}

Explanation explain(const Model& model, const KnowledgeBase& kb, std::string_view text) {
    ForwardPass f = forward(model, kb, text);
    Explanation e;
    e.prediction = f.prediction;
    e.retrieval = f.retrieval;
    e.chain = extract_chain(f.attention_weights(), f.retrieval, f.tokens,
                            model.config().max_chain_edges);
    e.rationale = render_rationale(e.chain, e.prediction, kb);
    return e;
}

Vocabulary build_model_vocab(const std::vector<CorpusExample>& corpus,
                             const std::vector<FragmentRecord>& knowledge) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(corpus.size() + knowledge.size());
    for (const auto& e : corpus) docs.push_back(tokenize(e.text));
    for (const auto& r : knowledge) docs.push_back(tokenize(r.text));
    return build_vocab(docs);
}

}  // namespace kalm
