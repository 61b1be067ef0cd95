#include "kalm/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "kalm/errors.hpp"
#include "kalm/trainer.hpp"

namespace kalm {

namespace {

std::size_t threads_from_env() {
    const char* env = std::getenv("KALM_THREADS");
    if (!env) return 1;
    std::size_t n = 0;
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc{} || ptr != s.data() + s.size() || n == 0) return 1;
    return n;
}

TrainConfig override_config(const TrainConfig& base, const std::string& param, double value,
                            std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    if (param == "batch_size") {
        if (value < 1.0 || value != std::floor(value)) {
            throw UsageError("batch_size values must be positive integers");
        }
        cfg.batch_size = static_cast<std::size_t>(value);
    } else {
        cfg.noise_ratio = value;
    }
    cfg.validate();
    return cfg;
}

}  // namespace

SweepResult sweep(const std::string& param, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                  const std::vector<CorpusExample>& train_corpus,
                  const std::vector<CorpusExample>& test_corpus,
                  const std::vector<FragmentRecord>& knowledge, std::size_t threads) {
    if (param != "batch_size" && param != "noise_ratio") {
        throw UsageError("unknown sweep parameter '" + param + "' (expected batch_size or noise_ratio)");
    }
    if (values.size() < 2) throw UsageError("sweep needs at least two values");
    if (seeds.empty()) throw UsageError("sweep needs at least one seed");
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (!(values[i] > values[i - 1])) throw UsageError("sweep values must be strictly increasing");
    }

    SweepResult result{param, values, seeds, {}};
    std::vector<TrainConfig> configs;
    for (double v : values) {
        for (std::uint64_t s : seeds) {
            configs.push_back(override_config(base, param, v, s));
            result.rows.push_back({v, s, {}});
        }
    }

    if (threads == 0) threads = threads_from_env();
    threads = std::min(threads, configs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                const TrainResult trained = train(train_corpus, knowledge, configs[i]);
                result.rows[i].report = evaluate(trained.model, test_corpus, knowledge).report;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return result;
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream out;
    out << kSweepCsvHeader << '\n';
    for (const auto& row : result.rows) {
        const auto& r = row.report;
        out << result.param << ',' << format_real(row.value) << ',' << row.seed << ','
            << format_real(r.accuracy) << ',' << format_real(r.rouge1_f) << ','
            << format_real(r.rougeL_f) << ',' << format_real(r.bleu) << ','
            << format_real(r.fact_score) << '\n';
    }
    return out.str();
}

nlohmann::ordered_json sweep_json(const SweepResult& result) {
    nlohmann::ordered_json j;
    j["param"] = result.param;
    j["values"] = result.values;
    j["seeds"] = result.seeds;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : result.rows) {
        nlohmann::ordered_json r;
        r["value"] = row.value;
        r["seed"] = row.seed;
        r["accuracy"] = row.report.accuracy;
        r["rouge1_f"] = row.report.rouge1_f;
        r["rougeL_f"] = row.report.rougeL_f;
        r["bleu"] = row.report.bleu;
        r["fact_score"] = row.report.fact_score;
        r["n_examples"] = row.report.n_examples;
        r["n_with_references"] = row.report.n_with_references;
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    return j;
}

std::vector<double> seed_average(const SweepResult& result, double MetricsReport::*metric) {
    std::vector<double> out;
    for (double v : result.values) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& row : result.rows) {
            if (row.value != v) continue;
            sum += row.report.*metric;
            ++n;
        }
        out.push_back(n == 0 ? 0.0 : sum / static_cast<double>(n));
    }
    return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DataError("spearman needs two equal-length series");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace kalm
