#pragma once

#include <string>
#include <vector>

#include "mmfuse/engine.hpp"

namespace mmfuse {

struct AblationRow {
    FusionKind fusion;
    double accuracy;
    double precision_macro;
    double auc_macro;
};

// One row per fusion kind in the fixed order text-only, image-only, concat,
// dot-product, tensor-product, all trained with identical hyperparameters
// and the identical stratified split, each evaluated on the shared held-out
// set.
struct AblationReport {
    std::vector<AblationRow> rows;
    TrainConfig config;
};

// Trains the five configurations (in parallel threads) and aborts the whole
// run if any row fails — a partial table is misleading.
AblationReport run_ablation(const Dataset& data, const TrainConfig& base);

void write_ablation_csv(const AblationReport& report, const std::string& path);
std::string ablation_to_json(const AblationReport& report);

struct BenchReport {
    std::size_t batch_size = 0;
    std::size_t repeats = 0;        // timed repeats (warm-up already excluded)
    std::size_t batches = 0;        // full batches per repeat
    std::vector<double> wall_seconds;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;       // sample standard deviation
    double samples_per_second = 0.0;
    std::string note;
};

// Forward-only timing over all full batches; the first of `repeats` runs is
// a discarded warm-up, so repeats must be at least 3 for two or more timed
// measurements. Strictly single-threaded.
BenchReport run_bench(ModelBundle& model, const Dataset& data, std::size_t batch_size = 128,
                      std::size_t repeats = 5, const std::string& note = "");

std::string bench_to_json(const BenchReport& report);

}  // namespace mmfuse
