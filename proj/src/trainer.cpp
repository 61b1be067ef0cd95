#include "kalm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "kalm/errors.hpp"

namespace kalm {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

// Independent deterministic streams derived from the run seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    return std::mt19937_64(seq);
}

constexpr std::uint64_t kShuffleSalt = 1;
constexpr std::uint64_t kNoiseSalt = 2;

}  // namespace

void OptimizerState::step(std::span<Parameter* const> params, std::span<const double> lr_scales) {
    if (!lr_scales.empty() && lr_scales.size() != params.size()) {
        throw DimensionError("optimizer got " + std::to_string(lr_scales.size()) +
                             " learning-rate scales for " + std::to_string(params.size()) +
                             " parameters");
    }
    auto lr = [&](std::size_t i) {
        return lr_scales.empty() ? cfg_.learning_rate : cfg_.learning_rate * lr_scales[i];
    };
    ++t_;
    if (cfg_.optimizer == Optimizer::sgd) {
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& v = params[pi]->value.values();
            const auto& g = params[pi]->grad.values();
            const double rate = lr(pi);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= rate * g[i];
        }
        return;
    }
    if (m_.size() != params.size()) {
        m_.clear();
        v_.clear();
        for (Parameter* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& val = params[pi]->value.values();
        const auto& g = params[pi]->grad.values();
        auto& m = m_[pi].values();
        auto& v = v_[pi].values();
        const double rate = lr(pi);
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            val[i] -= rate * mhat / (std::sqrt(vhat) + kAdamEpsilon);
        }
    }
}

LossBreakdown train_step(const std::vector<const CorpusExample*>& batch, Model& model,
                         const KnowledgeBase& kb, OptimizerState& optimizer) {
    if (batch.empty()) throw DataError("train_step on an empty batch");
    auto params = model.parameters();
    zero_grads(params);
    const double inv = 1.0 / static_cast<double>(batch.size());
    LossBreakdown mean;
    for (const CorpusExample* ex : batch) {
        const std::size_t target = model.label_index(ex->label);
        ForwardPass f;
        try {
            f = forward(model, kb, ex->text, target);
        } catch (const NumericError& e) {
            throw NumericError("example '" + ex->id + "': " + e.what());
        }
        const LossBreakdown& l = *f.losses;
        if (!std::isfinite(l.total)) throw NumericError("example '" + ex->id + "': non-finite loss");
        f.tape.backward(f.total_loss, params, inv);
        mean.task += l.task * inv;
        mean.explain += l.explain * inv;
        mean.total += l.total * inv;
    }
    optimizer.step(params, model.learning_rate_scales());
    zero_grads(params);
    return mean;
}

TrainResult train(const std::vector<CorpusExample>& corpus,
                  const std::vector<FragmentRecord>& knowledge, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw DataError("training corpus is empty");
    const auto labels = label_set(corpus);
    if (labels.size() < 2) throw ConfigError("training corpus needs at least two distinct labels");

    Vocabulary vocab = build_model_vocab(corpus, knowledge);
    std::vector<CorpusExample> data =
        cfg.noise_ratio > 0.0 ? inject_noise(corpus, cfg.noise_ratio, cfg.seed, vocab) : corpus;

    TrainResult result{Model(cfg, std::move(vocab), labels), {}};
    Model& model = result.model;
    OptimizerState optimizer(cfg);
    auto rng = stream(cfg.seed, kShuffleSalt);

    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const KnowledgeBase kb = model.ingest(knowledge);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown epoch_loss;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const CorpusExample*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
            const LossBreakdown l = train_step(batch, model, kb, optimizer);
            const double share = static_cast<double>(batch.size()) / static_cast<double>(data.size());
            epoch_loss.task += l.task * share;
            epoch_loss.explain += l.explain * share;
            epoch_loss.total += l.total * share;
        }
        result.history.push_back(epoch_loss);
    }
    return result;
}

std::vector<CorpusExample> inject_noise(const std::vector<CorpusExample>& corpus, double ratio,
                                        std::uint64_t seed, const Vocabulary& vocab) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
    std::vector<CorpusExample> out = corpus;
    const auto n_noisy = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(corpus.size())));
    if (n_noisy == 0) return out;
    if (vocab.size() < 3) throw DataError("noise vocabulary needs at least two tokens");

    auto rng = stream(seed, kNoiseSalt);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::bernoulli_distribution flip(0.5);
    // Draws from ids 1..size-1 excluding `avoid`.
    auto draw_other = [&](std::size_t avoid) {
        std::uniform_int_distribution<std::size_t> pick(1, vocab.size() - 1);
        std::size_t id = pick(rng);
        while (id == avoid) id = pick(rng);
        return id;
    };
    for (std::size_t k = 0; k < n_noisy; ++k) {
        CorpusExample& ex = out[order[k]];
        auto tokens = tokenize(ex.text);
        bool changed = false;
        for (auto& tok : tokens) {
            if (!flip(rng)) continue;
            tok = vocab.token(draw_other(vocab.id(tok)));
            changed = true;
        }
        if (!changed) {
            std::uniform_int_distribution<std::size_t> pos(0, tokens.size() - 1);
            auto& tok = tokens[pos(rng)];
            tok = vocab.token(draw_other(vocab.id(tok)));
        }
        ex.text = join_tokens(tokens);
    }
    return out;
}

std::vector<CorpusExample> inject_noise(const std::vector<CorpusExample>& corpus, double ratio,
                                        std::uint64_t seed) {
    std::vector<std::vector<std::string>> docs;
    for (const auto& e : corpus) docs.push_back(tokenize(e.text));
    return inject_noise(corpus, ratio, seed, build_vocab(docs));
}

std::string checkpoint_to_string(const Model& model) {
    const TrainConfig& cfg = model.config();
    std::ostringstream out;
    nlohmann::ordered_json header;
    header["format"] = kCheckpointFormat;
    header["d_model"] = cfg.d_model;
    header["heads"] = cfg.heads;
    header["labels"] = model.labels();
    header["config"] = config_to_json(cfg);
    out << header.dump() << '\n';
    for (const Parameter* p : model.parameters()) {
        nlohmann::ordered_json line;
        line["name"] = p->name;
        line["rows"] = p->value.rows();
        line["cols"] = p->value.cols();
        line["values"] = p->value.values();
        out << line.dump() << '\n';
    }
    nlohmann::ordered_json vocab;
    vocab["vocab"] = model.vocab().tokens();
    out << vocab.dump() << '\n';
    return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_to_string(model);
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Model checkpoint_from_string(const std::string& text) {
    std::vector<nlohmann::json> lines;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            lines.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("checkpoint line " + std::to_string(line_no) + " is malformed: " +
                            e.what());
        }
    }
    if (lines.empty()) throw DataError("checkpoint is empty");

    const auto& header = lines.front();
    if (!header.is_object() || !header.contains("format")) {
        throw DataError("checkpoint header lacks a format field");
    }
    const auto format = header["format"].get<std::string>();
    if (format != kCheckpointFormat) {
        throw VersionError("checkpoint format '" + format + "' is not supported (expected " +
                           kCheckpointFormat + ")");
    }
    TrainConfig cfg;
    std::vector<std::string> labels;
    try {
        cfg = config_from_json(header.at("config"));
        labels = header.at("labels").get<std::vector<std::string>>();
        if (header.at("d_model").get<std::size_t>() != cfg.d_model ||
            header.at("heads").get<std::size_t>() != cfg.heads) {
            throw DataError("checkpoint header dimensions disagree with its config");
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config is invalid: ") + e.what());
    }

    if (lines.size() < 2 || !lines.back().is_object() || !lines.back().contains("vocab")) {
        throw DataError("checkpoint is truncated: missing vocabulary line");
    }
    Vocabulary vocab;
    try {
        vocab = Vocabulary::from_tokens(lines.back()["vocab"].get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint vocabulary is malformed: ") + e.what());
    }

    Model model(cfg, std::move(vocab), labels);
    auto params = model.parameters();
    if (lines.size() != params.size() + 2) {
        throw DataError("checkpoint is truncated: expected " + std::to_string(params.size()) +
                        " parameters, found " + std::to_string(lines.size() - 2));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& j = lines[i + 1];
        Parameter& p = *params[i];
        try {
            const auto name = j.at("name").get<std::string>();
            const auto rows = j.at("rows").get<std::size_t>();
            const auto cols = j.at("cols").get<std::size_t>();
            auto values = j.at("values").get<std::vector<double>>();
            if (name != p.name) {
                throw DataError("checkpoint parameter " + std::to_string(i) + " is '" + name +
                                "', expected '" + p.name + "'");
            }
            if (rows != p.value.rows() || cols != p.value.cols() || values.size() != rows * cols) {
                throw DataError("checkpoint parameter '" + name + "' has inconsistent dimensions " +
                                std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                                p.value.shape_string());
            }
            p.value = Matrix(rows, cols, std::move(values));
            if (!p.value.all_finite()) throw DataError("checkpoint parameter '" + name + "' is not finite");
        } catch (const nlohmann::json::exception& e) {
            throw DataError("checkpoint parameter line " + std::to_string(i + 2) +
                            " is malformed: " + e.what());
        }
        p.zero_grad();
    }
    return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_string(ss.str());
}

}  // namespace kalm
