#include "kalm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "kalm/config.hpp"
#include "kalm/corpus.hpp"
#include "kalm/errors.hpp"
#include "kalm/explainer.hpp"
#include "kalm/metrics.hpp"
#include "kalm/model.hpp"
#include "kalm/sweep.hpp"
#include "kalm/trainer.hpp"

namespace kalm {

namespace {

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << contents;
    if (!f) throw DataError("failed writing " + path);
}

double parse_real(const std::string& field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw UsageError("cannot parse '" + field + "' as a number");
    }
    return v;
}

std::uint64_t parse_seed(const std::string& field) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw UsageError("cannot parse '" + field + "' as a seed");
    }
    return v;
}

struct TrainArgs {
    std::string config, corpus, kb, out;
};

struct EvalArgs {
    std::string checkpoint, corpus, kb, report;
    bool percent = false;
};

struct ExplainArgs {
    std::string checkpoint, kb, text, format = "text";
};

struct RetrieveArgs {
    std::string checkpoint, kb, text;
    std::size_t k = 4;
};

struct SweepArgs {
    std::string param, values, seeds, config, train, test, kb, csv, json;
};

struct SynthArgs {
    std::size_t entities = 200;
    std::string out_dir;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
    const auto corpus = load_corpus(a.corpus);
    const auto knowledge = load_knowledge_file(a.kb);
    const TrainResult result = train(corpus, knowledge, cfg);
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& l = result.history[e];
        out << "epoch " << e + 1 << " task=" << format_real(l.task)
            << " explain=" << format_real(l.explain) << " total=" << format_real(l.total) << '\n';
    }
    save_checkpoint(a.out, result.model);
    out << "wrote " << a.out << '\n';
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Model model = load_checkpoint(a.checkpoint);
    const auto corpus = load_corpus(a.corpus);
    const auto knowledge = load_knowledge_file(a.kb);
    const Evaluation ev = evaluate(model, corpus, knowledge);
    const std::string report = report_to_json(ev.report, model.config(), a.percent ? 100.0 : 1.0).dump(2) + "\n";
    if (!a.report.empty()) write_file(a.report, report);
    out << report;
    return kExitOk;
}

int cmd_explain(const ExplainArgs& a, std::ostream& out) {
    const Model model = load_checkpoint(a.checkpoint);
    const KnowledgeBase kb = model.ingest(load_knowledge_file(a.kb));
    const Explanation e = explain(model, kb, a.text);
    if (a.format == "json") {
        out << explanation_to_json(e.prediction, e.chain, e.rationale).dump(2) << '\n';
        return kExitOk;
    }
    out << "prediction: " << e.prediction.predicted_label << '\n';
    for (std::size_t i = 0; i < model.labels().size(); ++i) {
        out << "  p(" << model.labels()[i] << ") = "
            << format_weight(e.prediction.label_distribution[i]) << '\n';
    }
    out << "chain:\n";
    for (const auto& s : e.chain.steps) {
        out << "  \"" << s.source_text << "\" -> \"" << s.target_text << "\" "
            << format_weight(s.weight) << '\n';
    }
    out << "evidence:\n";
    for (const auto& l : e.chain.evidence) {
        out << "  " << l.fragment_id << ' ' << format_weight(l.weight) << '\n';
    }
    out << "rationale:\n" << e.rationale.text << '\n';
    return kExitOk;
}

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
    const Model model = load_checkpoint(a.checkpoint);
    const KnowledgeBase kb = model.ingest(load_knowledge_file(a.kb));
    const Matrix h = encode(model.encoder, make_sequence(a.text, model.vocab()));
    const RetrievalResult r = retrieve(pool(h), kb, a.k, model.config().tau);
    nlohmann::ordered_json j;
    j["fragment_ids"] = r.fragment_ids;
    j["similarities"] = r.similarities;
    j["weights"] = r.weights;
    out << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    std::vector<double> values;
    for (const auto& f : split_csv(a.values)) values.push_back(parse_real(f));
    std::vector<std::uint64_t> seeds;
    for (const auto& f : split_csv(a.seeds)) seeds.push_back(parse_seed(f));
    const TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
    const auto train_corpus = load_corpus(a.train);
    const auto test_corpus = load_corpus(a.test);
    const auto knowledge = load_knowledge_file(a.kb);
    const SweepResult result = sweep(a.param, values, seeds, cfg, train_corpus, test_corpus, knowledge);
    const std::string csv = sweep_csv(result);
    if (!a.csv.empty()) write_file(a.csv, csv);
    if (!a.json.empty()) write_file(a.json, sweep_json(result).dump(2) + "\n");
    out << csv;
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
    const GradCheckReport r = tiny_model_gradcheck(seed);
    nlohmann::ordered_json j;
    j["max_rel_error"] = r.max_rel_error;
    j["mean_rel_error"] = r.mean_rel_error;
    j["worst_parameter"] = r.worst_parameter;
    j["num_checked"] = r.num_checked;
    j["fraction_below_1e-4"] = r.fraction_within_tight();
    out << j.dump(2) << '\n';
    return r.max_rel_error < 1e-3 && r.fraction_within_tight() >= 0.99 ? kExitOk : kExitNumeric;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const SyntheticData data = generate_synthetic(a.entities, a.train_fraction, a.seed);
    write_synthetic(a.out_dir, data);
    out << "wrote " << data.train.size() << " train, " << data.test.size() << " test, "
        << data.knowledge.size() << " fragments to " << a.out_dir << '\n';
    return kExitOk;
}

}  // namespace

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = text.find(',', start);
        std::string f = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto first = f.find_first_not_of(" \t");
        const auto last = f.find_last_not_of(" \t");
        f = first == std::string::npos ? "" : f.substr(first, last - first + 1);
        if (f.empty()) throw UsageError("empty field in list '" + text + "'");
        fields.push_back(std::move(f));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return fields;
}

GradCheckReport tiny_model_gradcheck(std::uint64_t seed) {
    constexpr std::size_t kWords = 28;
    constexpr std::size_t kFragmentWords = 4;
    constexpr std::size_t kTextWords = 5;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < kWords; ++i) words.push_back("w" + std::to_string(i));

    std::mt19937_64 rng(seed);
    std::vector<std::string> shuffled = words;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<FragmentRecord> knowledge;
    for (std::size_t f = 0; f * kFragmentWords < kWords; ++f) {
        std::vector<std::string> toks(shuffled.begin() + static_cast<std::ptrdiff_t>(f * kFragmentWords),
                                      shuffled.begin() + static_cast<std::ptrdiff_t>((f + 1) * kFragmentWords));
        knowledge.push_back({"f" + std::to_string(f), join_tokens(toks)});
    }
    std::uniform_int_distribution<std::size_t> pick(0, kWords - 1);
    std::vector<std::string> text;
    for (std::size_t i = 0; i < kTextWords; ++i) text.push_back(words[pick(rng)]);
    const std::vector<CorpusExample> corpus{{"x0", join_tokens(text), "pos", std::nullopt},
                                            {"x1", "w0", "neg", std::nullopt}};

    TrainConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.top_k = 2;
    cfg.seed = seed;
    cfg.position_scale = 1.0;
    cfg.encoder_init_scale = 1.0;
    Model model(cfg, build_model_vocab(corpus, knowledge), label_set(corpus));
    const KnowledgeBase kb = model.ingest(knowledge);
    return grad_check(model, corpus.front(), kb, 1e-5);
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"knowledge-augmented reasoning pipeline", "kalm"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    train_cmd->add_option("--config", train_args.config, "key = value config file");
    train_cmd->add_option("--corpus", train_args.corpus, "training corpus (JSONL)")->required();
    train_cmd->add_option("--kb", train_args.kb, "knowledge fragments (JSONL)")->required();
    train_cmd->add_option("--out", train_args.out, "checkpoint path")->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a labeled corpus");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval_cmd->add_option("--corpus", eval_args.corpus)->required();
    eval_cmd->add_option("--kb", eval_args.kb)->required();
    eval_cmd->add_option("--report", eval_args.report, "JSON report path");
    eval_cmd->add_flag("--percent", eval_args.percent, "report ROUGE and BLEU on a 0-100 scale");

    ExplainArgs explain_args;
    auto* explain_cmd = app.add_subcommand("explain", "predict and explain one text");
    explain_cmd->add_option("--checkpoint", explain_args.checkpoint)->required();
    explain_cmd->add_option("--kb", explain_args.kb)->required();
    explain_cmd->add_option("--text", explain_args.text)->required();
    explain_cmd->add_option("--format", explain_args.format)
        ->check(CLI::IsMember({"text", "json"}));

    RetrieveArgs retrieve_args;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "top-k knowledge fragments for a text");
    retrieve_cmd->add_option("--checkpoint", retrieve_args.checkpoint)->required();
    retrieve_cmd->add_option("--kb", retrieve_args.kb)->required();
    retrieve_cmd->add_option("--text", retrieve_args.text)->required();
    retrieve_cmd->add_option("--k", retrieve_args.k)->check(CLI::PositiveNumber);

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "retrain and evaluate across parameter values");
    sweep_cmd->add_option("--param", sweep_args.param, "batch_size or noise_ratio")->required();
    sweep_cmd->add_option("--values", sweep_args.values, "comma-separated, increasing")->required();
    sweep_cmd->add_option("--seeds", sweep_args.seeds, "comma-separated")->required();
    sweep_cmd->add_option("--config", sweep_args.config);
    sweep_cmd->add_option("--train", sweep_args.train)->required();
    sweep_cmd->add_option("--test", sweep_args.test)->required();
    sweep_cmd->add_option("--kb", sweep_args.kb)->required();
    sweep_cmd->add_option("--csv", sweep_args.csv, "CSV output path");
    sweep_cmd->add_option("--json", sweep_args.json, "JSON output path");

    std::uint64_t gradcheck_seed = 0;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check on a tiny model");
    gradcheck_cmd->add_option("--seed", gradcheck_seed);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic entity corpus");
    synth_cmd->add_option("--entities", synth_args.entities);
    synth_cmd->add_option("--out-dir", synth_args.out_dir)->required();
    synth_cmd->add_option("--seed", synth_args.seed);
    synth_cmd->add_option("--train-fraction", synth_args.train_fraction);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out);
        if (*eval_cmd) return cmd_eval(eval_args, out);
        if (*explain_cmd) return cmd_explain(explain_args, out);
        if (*retrieve_cmd) return cmd_retrieve(retrieve_args, out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, out);
        if (*gradcheck_cmd) return cmd_gradcheck(gradcheck_seed, out);
        if (*synth_cmd) return cmd_synth(synth_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace kalm
