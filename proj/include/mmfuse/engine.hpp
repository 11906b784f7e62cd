#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmfuse/data.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/model.hpp"

namespace mmfuse {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;  // stratified by class
    FusionKind fusion = FusionKind::TensorProduct;
    EncoderConfig encoder;
    std::size_t head_hidden = 32;

    void validate() const;
};

// Defaults overridden by the keys present in a JSON object; unknown keys
// are an error.
TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& config);

// Per-parameter Adam moments, aligned with the ParamRefs order.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
};

// Standard Adam with bias correction; zeroes each gradient after applying
// it. The state is sized on first use and must stay aligned afterwards.
void adam_step(const ParamRefs& params, AdamState& state, const TrainConfig& config);

struct EpochStats {
    std::size_t epoch;      // 1-based
    double train_loss;      // mean per-sample loss over the epoch
    double val_accuracy;
};

struct TrainResult {
    ModelBundle model;
    std::vector<EpochStats> history;
    std::vector<std::size_t> train_indices;  // sorted
    std::vector<std::size_t> val_indices;    // sorted
};

// Stratified 80/20-style split, then minibatch Adam over seed-shuffled
// epochs. A single generator seeded from config.seed drives, in order, the
// split, the parameter init, and every epoch shuffle, so (data, config)
// determine the result exactly.
TrainResult train(const Dataset& data, const TrainConfig& config);

// Forward-only pass filling every report field. When a class is absent the
// AUC fields are flagged undefined instead of fabricated.
EvalReport evaluate(ModelBundle& model, const Dataset& data);
EvalReport evaluate(ModelBundle& model, const Dataset& data,
                    const std::vector<std::size_t>& indices);

// JSON document {"format_version": 1, "config": {...}, "tensors":
// {name: {"shape": [...], "data": [...]}}}; decimal text round-trips
// exactly, so load(save(m)) reproduces m bitwise.
void save_model(ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace mmfuse
