#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "kalm/config.hpp"
#include "kalm/corpus.hpp"
#include "kalm/metrics.hpp"

namespace kalm {

struct SweepRow {
    double value = 0.0;
    std::uint64_t seed = 0;
    MetricsReport report;
};

struct SweepResult {
    std::string param;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepRow> rows;  // value-major, then seed
};

inline constexpr const char* kSweepCsvHeader =
    "param,value,seed,accuracy,rouge1_f,rougeL_f,bleu,fact_score";

/// Retrains from scratch for every (value, seed) with `param` overridden and
/// evaluates on the untouched test set. `threads` = 0 reads KALM_THREADS
/// (default 1).
SweepResult sweep(const std::string& param, const std::vector<double>& values,
                  const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                  const std::vector<CorpusExample>& train_corpus,
                  const std::vector<CorpusExample>& test_corpus,
                  const std::vector<FragmentRecord>& knowledge, std::size_t threads = 0);

std::string sweep_csv(const SweepResult& result);
nlohmann::ordered_json sweep_json(const SweepResult& result);

/// Per-value mean of `metric` over seeds, in value order.
std::vector<double> seed_average(const SweepResult& result, double MetricsReport::*metric);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Shortest decimal that round-trips.
std::string format_real(double v);

}  // namespace kalm
