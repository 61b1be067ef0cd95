#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kalm/cli.hpp"
#include "kalm/config.hpp"
#include "kalm/corpus.hpp"
#include "kalm/errors.hpp"
#include "kalm/model.hpp"
#include "kalm/sweep.hpp"
#include "kalm/trainer.hpp"
#include "oracles.hpp"

using namespace kalm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::set<std::string> entities(const std::vector<CorpusExample>& corpus) {
    std::set<std::string> out;
    for (const auto& ex : corpus) out.insert(ex.text);
    return out;
}

const char* kSmallConfig = "d_model = 16\nheads = 2\ntop_k = 2\nepochs = 2\nbatch_size = 8\n";

}  // namespace

TEST_CASE("config parsing") {
    CHECK(parse_config("") == TrainConfig{});
    CHECK(parse_config("# comment\n\nbatch_size = 32\n").batch_size == 32);
    const TrainConfig cfg = parse_config("alpha=0.25\nlambda = 2\noptimizer = sgd\nseed = 18446744073709551615\n");
    CHECK(cfg.alpha == 0.25);
    CHECK(cfg.lambda == 2.0);
    CHECK(cfg.optimizer == Optimizer::sgd);
    CHECK(cfg.seed == 18446744073709551615ull);
    CHECK(config_from_json(config_to_json(cfg)) == cfg);

    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string range = message("epochs = 3\nalpha = 1.5\n");
    CHECK(range.find("alpha") != std::string::npos);
    CHECK(range.find("line 2") != std::string::npos);
    CHECK(message("colour = red").find("colour") != std::string::npos);
    CHECK(message("batch_size = 3.5").find("batch_size") != std::string::npos);
    CHECK(message("just words").find("line 1") != std::string::npos);
    CHECK(message("d_model = 10\nheads = 4") != "no error");
    CHECK(message("noise_ratio = -0.1") != "no error");
}

TEST_CASE("corpus loading") {
    TempDir dir("kalm_test_corpus");
    write(dir / "two.jsonl",
          "{\"id\":\"a\",\"text\":\"up\",\"label\":\"pos\"}\n"
          "{\"id\":\"b\",\"text\":\"down\",\"label\":\"neg\",\"reference_explanation\":\"why\"}\n");
    const auto corpus = load_corpus(dir / "two.jsonl");
    REQUIRE(corpus.size() == 2);
    CHECK_FALSE(corpus[0].reference_explanation.has_value());
    CHECK(corpus[1].reference_explanation == std::optional<std::string>("why"));
    CHECK(label_set(corpus) == std::vector<std::string>{"neg", "pos"});

    write(dir / "bad.jsonl",
          "{\"id\":\"a\",\"text\":\"up\",\"label\":\"pos\"}\n"
          "{\"id\":\"b\",\"text\":\"down\",\"label\":\"neg\"}\n"
          "{\"id\":\"c\",\"text\":\n");
    try {
        load_corpus(dir / "bad.jsonl");
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    write(dir / "dup.jsonl",
          "{\"id\":\"a\",\"text\":\"up\",\"label\":\"pos\"}\n{\"id\":\"a\",\"text\":\"x\",\"label\":\"neg\"}\n");
    CHECK_THROWS_AS(load_corpus(dir / "dup.jsonl"), DataError);
    CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl"), DataError);
}

TEST_CASE("structured fields become key=value tokens") {
    TempDir dir("kalm_test_fields");
    write(dir / "corpus.jsonl",
          "{\"id\":\"a\",\"text\":\"quarterly filing\",\"label\":\"pos\",\"fields\":{\"sector\":\"energy\",\"eps\":1.5}}\n"
          "{\"id\":\"b\",\"text\":\"plain\",\"label\":\"neg\",\"fields\":null}\n");
    const auto corpus = load_corpus(dir / "corpus.jsonl");
    CHECK(corpus[0].text == "quarterly filing eps=1.5 sector=energy");
    CHECK(tokenize(corpus[0].text) == std::vector<std::string>{"quarterly", "filing", "eps", "=", "1", ".", "5",
                                                                 "sector", "=", "energy"});
    CHECK(corpus[1].text == "plain");

    write(dir / "kb.jsonl", "{\"id\":\"k\",\"text\":\"acme\",\"fields\":{\"rating\":\"aa\"}}\n");
    CHECK(load_knowledge_file(dir / "kb.jsonl").front().text == "acme rating=aa");

    write(dir / "bad.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":\"p\",\"fields\":[1]}\n");
    try {
        load_corpus(dir / "bad.jsonl");
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("synthetic corpus splits by entity") {
    const SyntheticData data = generate_synthetic(100, 0.8, 4);
    CHECK(data.train.size() == 80);
    CHECK(data.test.size() == 20);
    CHECK(data.knowledge.size() == 100);
    const auto train = entities(data.train), test = entities(data.test);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    for (const auto& t : test) CHECK(train.count(t) == 0);
    CHECK(label_set(data.train) == std::vector<std::string>{"negative", "positive"});
    for (const auto& ex : data.test) CHECK(ex.reference_explanation.has_value());

    const SyntheticData again = generate_synthetic(100, 0.8, 4);
    CHECK(again.train == data.train);
    CHECK(again.test == data.test);
    CHECK(again.knowledge == data.knowledge);
    CHECK_THROWS_AS(generate_synthetic(9, 0.8, 0), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(20, 1.0, 0), ConfigError);
}

TEST_CASE("synthetic entity names share at most one word") {
    const std::size_t n = 200, pool = synthetic_word_pool(n);
    std::vector<std::set<std::string>> names;
    for (std::size_t i = 0; i < n; ++i) {
        const auto words = tokenize(synthetic_entity_name(i, pool));
        REQUIRE(words.size() == 3);
        names.emplace_back(words.begin(), words.end());
        CHECK(names.back().size() == 3);
    }
    std::size_t worst = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            std::vector<std::string> shared;
            std::set_intersection(names[i].begin(), names[i].end(), names[j].begin(), names[j].end(),
                                  std::back_inserter(shared));
            worst = std::max(worst, shared.size());
        }
    CHECK(worst == 1);
    CHECK_THROWS_AS(synthetic_entity_name(pool * pool, pool), ConfigError);
    CHECK(synthetic_fragment_id(7) == "kb-007");
    CHECK(synthetic_example_id(12) == "ex-012");
}

TEST_CASE("synthetic files round trip") {
    TempDir dir("kalm_test_synth");
    const SyntheticData data = generate_synthetic(30, 0.8, 1);
    write_synthetic(dir.path, data);
    CHECK(load_corpus(dir / "train.jsonl") == data.train);
    CHECK(load_corpus(dir / "test.jsonl") == data.test);
    CHECK(load_knowledge_file(dir / "kb.jsonl") == data.knowledge);
    save_corpus(dir / "copy.jsonl", data.test);
    CHECK(slurp(dir / "copy.jsonl") == slurp(dir / "test.jsonl"));
}

TEST_CASE("each test example retrieves its own entity's fragment first") {
    TrainConfig cfg;
    cfg.d_model = 128;
    cfg.heads = 4;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const SyntheticData data = generate_synthetic(200, 0.8, seed);
        cfg.seed = seed;
        const Model m(cfg, build_model_vocab(data.train, data.knowledge), label_set(data.train));
        const KnowledgeBase kb = m.ingest(data.knowledge);
        for (const auto& ex : data.test) {
            const auto ids = make_sequence(ex.text, m.vocab()).ids;
            const std::vector<double> q = pool(oracle::encode(m.encoder, ids));
            const RetrievalResult r = oracle::retrieve(q, kb, 1, cfg.tau);
            CHECK(r.fragment_ids[0] == "kb-" + ex.id.substr(3));
        }
    }
}

TEST_CASE("command line errors map to exit codes") {
    TempDir dir("kalm_test_cli_errors");
    const Run unknown = run({"frobnicate"});
    CHECK(unknown.code == kExitUsage);
    CHECK(unknown.err.find("Usage") != std::string::npos);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({"eval", "--corpus", "x"}).code == kExitUsage);

    write_synthetic(dir.path, generate_synthetic(20, 0.8, 0));
    CHECK(run({"eval", "--checkpoint", dir / "none.ckpt", "--corpus", dir / "test.jsonl", "--kb", dir / "kb.jsonl"}).code == kExitData);
    write(dir / "bad.cfg", "alpha = 2\n");
    CHECK(run({"train", "--config", dir / "bad.cfg", "--corpus", dir / "train.jsonl", "--kb", dir / "kb.jsonl", "--out", dir / "m.ckpt"}).code == kExitData);
    CHECK(run({"sweep", "--param", "lambda", "--values", "0,1", "--seeds", "0", "--train", dir / "train.jsonl",
               "--test", dir / "test.jsonl", "--kb", dir / "kb.jsonl"}).code == kExitUsage);
    CHECK_THROWS_AS(split_csv("1,,2"), UsageError);
    CHECK(split_csv(" 8, 16 ,32") == std::vector<std::string>{"8", "16", "32"});
}

TEST_CASE("gradcheck command succeeds on the tiny model") {
    const Run r = run({"gradcheck", "--seed", "0"});
    CHECK(r.code == kExitOk);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["max_rel_error"].get<double>() < 1e-3);
    CHECK(j["fraction_below_1e-4"].get<double>() >= 0.99);
}

TEST_CASE("train, eval, explain and retrieve end to end") {
    TempDir dir("kalm_test_cli_flow");
    REQUIRE(run({"synth", "--entities", "20", "--out-dir", dir.path.string(), "--seed", "2"}).code == kExitOk);
    write(dir / "small.cfg", kSmallConfig);
    const std::vector<std::string> train_args{"train", "--config", dir / "small.cfg", "--corpus", dir / "train.jsonl",
                                              "--kb", dir / "kb.jsonl", "--out", dir / "a.ckpt"};
    REQUIRE(run(train_args).code == kExitOk);
    auto again = train_args;
    again.back() = dir / "b.ckpt";
    REQUIRE(run(again).code == kExitOk);
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));

    const std::vector<std::string> eval_args{"eval", "--checkpoint", dir / "a.ckpt", "--corpus", dir / "test.jsonl",
                                             "--kb", dir / "kb.jsonl", "--report", dir / "r1.json"};
    REQUIRE(run(eval_args).code == kExitOk);
    auto eval2 = eval_args;
    eval2.back() = dir / "r2.json";
    REQUIRE(run(eval2).code == kExitOk);
    CHECK(slurp(dir / "r1.json") == slurp(dir / "r2.json"));
    const auto report = nlohmann::json::parse(slurp(dir / "r1.json"));
    CHECK(report["n_examples"] == 4);
    CHECK(report["config_echo"]["d_model"] == 16);
    auto eval_pct = eval_args;
    eval_pct.back() = dir / "pct.json";
    eval_pct.push_back("--percent");
    REQUIRE(run(eval_pct).code == kExitOk);
    const auto pct = nlohmann::json::parse(slurp(dir / "pct.json"));
    CHECK(pct["overlap_scale"] == 100.0);
    CHECK(pct["rougeL_f"].get<double>() == doctest::Approx(100.0 * report["rougeL_f"].get<double>()));

    const auto test = load_corpus(dir / "test.jsonl");
    const Run text = run({"explain", "--checkpoint", dir / "a.ckpt", "--kb", dir / "kb.jsonl", "--text", test[0].text});
    CHECK(text.code == kExitOk);
    CHECK(text.out.find("predicted ") != std::string::npos);
    CHECK(text.out.find("supported by kb-") != std::string::npos);
    const Run js = run({"explain", "--checkpoint", dir / "a.ckpt", "--kb", dir / "kb.jsonl", "--text", test[0].text, "--format", "json"});
    REQUIRE(js.code == kExitOk);
    const auto ej = nlohmann::json::parse(js.out);
    for (const char* key : {"prediction", "steps", "evidence", "rationale"}) CHECK(ej.contains(key));
    CHECK(run({"explain", "--checkpoint", dir / "a.ckpt", "--kb", dir / "kb.jsonl", "--text", "   "}).code == kExitData);

    const Run ret = run({"retrieve", "--checkpoint", dir / "a.ckpt", "--kb", dir / "kb.jsonl", "--text", test[0].text, "--k", "3"});
    REQUIRE(ret.code == kExitOk);
    const auto rj = nlohmann::json::parse(ret.out);
    CHECK(rj["fragment_ids"].size() == 3);
    CHECK(rj["weights"].size() == 3);
}

TEST_CASE("sweep command writes one row per value and seed") {
    TempDir dir("kalm_test_cli_sweep");
    write_synthetic(dir.path, generate_synthetic(20, 0.8, 0));
    write(dir / "small.cfg", "d_model = 8\nheads = 2\ntop_k = 2\nepochs = 1\n");
    const Run r = run({"sweep", "--param", "batch_size", "--values", "8,16,32,64,128", "--seeds", "0,1,2", "--config",
                       dir / "small.cfg", "--train", dir / "train.jsonl", "--test", dir / "test.jsonl", "--kb",
                       dir / "kb.jsonl", "--csv", dir / "s.csv", "--json", dir / "s.json"});
    REQUIRE(r.code == kExitOk);
    std::istringstream csv(slurp(dir / "s.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == kSweepCsvHeader);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        CHECK(line.rfind("batch_size,", 0) == 0);
        ++rows;
    }
    CHECK(rows == 15);
    CHECK(nlohmann::json::parse(slurp(dir / "s.json"))["rows"].size() == 15);
}

TEST_CASE("sweep library contract") {
    const SyntheticData data = generate_synthetic(20, 0.8, 0);
    TrainConfig base;
    base.d_model = 8;
    base.heads = 2;
    base.epochs = 1;
    CHECK_THROWS_AS(sweep("heads", {1, 2}, {0}, base, data.train, data.test, data.knowledge), UsageError);
    CHECK_THROWS_AS(sweep("noise_ratio", {0.1}, {0}, base, data.train, data.test, data.knowledge), UsageError);
    CHECK_THROWS_AS(sweep("noise_ratio", {0.2, 0.1}, {0}, base, data.train, data.test, data.knowledge), UsageError);
    CHECK_THROWS_AS(sweep("noise_ratio", {0.0, 0.1}, {}, base, data.train, data.test, data.knowledge), UsageError);
    CHECK_THROWS_AS(sweep("batch_size", {1.5, 2}, {0}, base, data.train, data.test, data.knowledge), UsageError);

    const SweepResult serial = sweep("noise_ratio", {0.0, 0.5}, {0, 1}, base, data.train, data.test, data.knowledge, 1);
    const SweepResult parallel = sweep("noise_ratio", {0.0, 0.5}, {0, 1}, base, data.train, data.test, data.knowledge, 3);
    CHECK(sweep_csv(serial) == sweep_csv(parallel));
    REQUIRE(serial.rows.size() == 4);
    CHECK(serial.rows[1].value == 0.0);
    CHECK(serial.rows[1].seed == 1);
    CHECK(serial.rows[2].value == 0.5);
    const auto avg = seed_average(serial, &MetricsReport::accuracy);
    CHECK(avg[0] == doctest::Approx((serial.rows[0].report.accuracy + serial.rows[1].report.accuracy) / 2));
}

TEST_CASE("spearman correlation") {
    CHECK(spearman({0, 1, 2, 3}, {10, 8, 5, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({0, 1, 2, 3}, {1, 2, 3, 4}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
    CHECK(spearman({1, 2, 3, 4}, {1, 3, 3, 4}) == doctest::Approx(0.9486832981).epsilon(1e-9));
    CHECK_THROWS_AS(spearman({1}, {1}), DataError);
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(32) == "32");
}
