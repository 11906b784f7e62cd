#include "mmfuse/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mmfuse {

namespace {

using nlohmann::json;

double get_number(const json& obj, const char* key) {
    if (!obj.is_number()) {
        throw std::invalid_argument(std::string("TrainConfig key '") + key +
                                    "' must be a number");
    }
    return obj.get<double>();
}

std::size_t get_count(const json& obj, const char* key) {
    const double value = get_number(obj, key);
    if (value < 0 || value != std::floor(value)) {
        throw std::invalid_argument(std::string("TrainConfig key '") + key +
                                    "' must be a non-negative integer");
    }
    return static_cast<std::size_t>(value);
}

void apply_encoder_overrides(EncoderConfig& encoder, const json& obj) {
    for (const auto& [key, value] : obj.items()) {
        if (key == "vocab_size") encoder.vocab_size = get_count(value, key.c_str());
        else if (key == "max_seq") encoder.max_seq = get_count(value, key.c_str());
        else if (key == "d_model") encoder.d_model = get_count(value, key.c_str());
        else if (key == "heads") encoder.heads = get_count(value, key.c_str());
        else if (key == "blocks") encoder.blocks = get_count(value, key.c_str());
        else if (key == "segments") encoder.segments = get_count(value, key.c_str());
        else if (key == "image_side") encoder.image_side = get_count(value, key.c_str());
        else if (key == "patch_side") encoder.patch_side = get_count(value, key.c_str());
        else if (key == "proj_dim") encoder.proj_dim = get_count(value, key.c_str());
        else throw std::invalid_argument("unknown encoder config key '" + key + "'");
    }
}

json encoder_to_json(const EncoderConfig& encoder) {
    json obj;
    obj["vocab_size"] = encoder.vocab_size;
    obj["max_seq"] = encoder.max_seq;
    obj["d_model"] = encoder.d_model;
    obj["heads"] = encoder.heads;
    obj["blocks"] = encoder.blocks;
    obj["segments"] = encoder.segments;
    obj["image_side"] = encoder.image_side;
    obj["patch_side"] = encoder.patch_side;
    obj["proj_dim"] = encoder.proj_dim;
    return obj;
}

void fisher_yates(std::vector<std::size_t>& values, Rng& rng) {
    for (std::size_t k = values.size(); k > 1; --k) {
        const std::size_t j = rng.next_below(k);
        std::swap(values[k - 1], values[j]);
    }
}

ModelConfig model_config_for(const Dataset& data, const TrainConfig& config) {
    ModelConfig mc;
    mc.mode = data.is_raw() ? InputMode::Raw : InputMode::Embedding;
    mc.embed_dim = data.dim();
    mc.encoder = config.encoder;
    mc.fusion = config.fusion;
    mc.head_hidden = config.head_hidden;
    return mc;
}

Tensor forward_sample(ModelBundle& model, const Dataset& data, std::size_t i) {
    return data.is_raw() ? model.forward(data.raw[i]) : model.forward(data.embedding[i]);
}

int argmax3(const Tensor& probs) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
        if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    return best;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("TrainConfig: adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("TrainConfig: train_fraction must lie in (0, 1)");
    }
    if (head_hidden < 1) throw std::invalid_argument("TrainConfig: head_hidden must be >= 1");
    encoder.validate();
}

TrainConfig train_config_from_json(const std::string& json_text) {
    json obj;
    try {
        obj = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("TrainConfig: invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) {
        throw std::invalid_argument("TrainConfig: expected a JSON object");
    }

    TrainConfig config;
    for (const auto& [key, value] : obj.items()) {
        if (key == "epochs") config.epochs = get_count(value, key.c_str());
        else if (key == "batch_size") config.batch_size = get_count(value, key.c_str());
        else if (key == "learning_rate") config.learning_rate = get_number(value, key.c_str());
        else if (key == "adam_beta1") config.adam_beta1 = get_number(value, key.c_str());
        else if (key == "adam_beta2") config.adam_beta2 = get_number(value, key.c_str());
        else if (key == "adam_eps") config.adam_eps = get_number(value, key.c_str());
        else if (key == "seed") config.seed = get_count(value, key.c_str());
        else if (key == "train_fraction") {
            config.train_fraction = get_number(value, key.c_str());
        } else if (key == "head_hidden") {
            config.head_hidden = get_count(value, key.c_str());
        } else if (key == "fusion") {
            if (!value.is_string()) {
                throw std::invalid_argument("TrainConfig key 'fusion' must be a string");
            }
            config.fusion = fusion_from_name(value.get<std::string>());
        } else if (key == "encoder") {
            if (!value.is_object()) {
                throw std::invalid_argument("TrainConfig key 'encoder' must be an object");
            }
            apply_encoder_overrides(config.encoder, value);
        } else {
            throw std::invalid_argument("unknown TrainConfig key '" + key + "'");
        }
    }
    config.validate();
    return config;
}

std::string train_config_to_json(const TrainConfig& config) {
    json obj;
    obj["epochs"] = config.epochs;
    obj["batch_size"] = config.batch_size;
    obj["learning_rate"] = config.learning_rate;
    obj["adam_beta1"] = config.adam_beta1;
    obj["adam_beta2"] = config.adam_beta2;
    obj["adam_eps"] = config.adam_eps;
    obj["seed"] = config.seed;
    obj["train_fraction"] = config.train_fraction;
    obj["fusion"] = fusion_name(config.fusion);
    obj["encoder"] = encoder_to_json(config.encoder);
    obj["head_hidden"] = config.head_hidden;
    return obj.dump(2);
}

void adam_step(const ParamRefs& params, AdamState& state, const TrainConfig& config) {
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto& [name, param] : params) {
            state.m.emplace_back(param->value.shape());
            state.v.emplace_back(param->value.shape());
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state holds " +
                                    std::to_string(state.m.size()) + " moments for " +
                                    std::to_string(params.size()) + " parameters");
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Param& param = *params[p].second;
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        if (!m.same_shape(param.value)) {
            throw std::invalid_argument("adam_step: moment shape " + m.shape_str() +
                                        " does not match parameter " + params[p].first +
                                        " " + param.value.shape_str());
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = param.grad[i];
            m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
            v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
            param.value[i] -=
                config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
        }
        param.zero_grad();
    }
}

namespace {

// Per-class index pools are shuffled and cut at round(fraction * size); the
// class loops run in label order so the draw sequence is reproducible.
void stratified_split(const Dataset& data, double fraction, Rng& rng,
                      std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int label = data.label(i);
        if (label < 0 || label >= kNumClasses) {
            throw std::invalid_argument("train: label " + std::to_string(label) +
                                        " out of range [0, 3)");
        }
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }
    for (int c = 0; c < kNumClasses; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (pool.empty()) {
            throw std::invalid_argument("train: no samples of class " + label_name(c));
        }
        fisher_yates(pool, rng);
        const auto take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(pool.size())));
        if (take == 0) {
            throw std::invalid_argument("train: class " + label_name(c) +
                                        " missing from training split");
        }
        train.insert(train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
        val.insert(val.end(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }

    Rng rng(config.seed);
    std::vector<std::size_t> train_idx, val_idx;
    stratified_split(data, config.train_fraction, rng, train_idx, val_idx);

    ModelBundle model(model_config_for(data, config), rng);
    const ParamRefs params = model.params();
    AdamState adam;

    std::vector<EpochStats> history;
    history.reserve(config.epochs);
    std::vector<std::size_t> order = train_idx;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        fisher_yates(order, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                forward_sample(model, data, order[k]);
                loss_sum += model.backward(data.label(order[k]), scale);
            }
            adam_step(params, adam, config);
        }

        std::size_t correct = 0;
        for (std::size_t i : val_idx) {
            if (argmax3(forward_sample(model, data, i)) == data.label(i)) ++correct;
        }
        const double val_acc = val_idx.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : static_cast<double>(correct) /
                                         static_cast<double>(val_idx.size());
        history.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_acc});
    }

    return {std::move(model), std::move(history), std::move(train_idx), std::move(val_idx)};
}

EvalReport evaluate(ModelBundle& model, const Dataset& data) {
    std::vector<std::size_t> indices(data.size());
    std::iota(indices.begin(), indices.end(), 0);
    return evaluate(model, data, indices);
}

EvalReport evaluate(ModelBundle& model, const Dataset& data,
                    const std::vector<std::size_t>& indices) {
    if (indices.empty()) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    const std::size_t n = indices.size();

    Tensor probs({n, static_cast<std::size_t>(kNumClasses)});
    std::vector<int> preds(n), labels(n);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < n; ++k) {
        const Tensor p = forward_sample(model, data, indices[k]);
        for (int c = 0; c < kNumClasses; ++c) {
            probs[k * kNumClasses + static_cast<std::size_t>(c)] =
                p[static_cast<std::size_t>(c)];
        }
        preds[k] = argmax3(p);
        labels[k] = data.label(indices[k]);
    }
    const auto stop = std::chrono::steady_clock::now();

    EvalReport report;
    report.n = n;
    report.wall_seconds = std::chrono::duration<double>(stop - start).count();
    report.accuracy = accuracy(preds, labels);
    report.precision_macro = precision_macro(preds, labels);
    report.confusion = confusion_matrix(preds, labels);

    std::vector<std::size_t> class_counts(kNumClasses, 0);
    for (int label : labels) ++class_counts[static_cast<std::size_t>(label)];
    report.auc_defined = std::all_of(class_counts.begin(), class_counts.end(),
                                     [](std::size_t c) { return c > 0; });

    report.per_class.resize(kNumClasses);
    double auc_sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        ClassMetrics& cls = report.per_class[static_cast<std::size_t>(c)];
        std::size_t predicted = 0;
        for (int t = 0; t < kNumClasses; ++t) {
            predicted += report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)];
        }
        cls.precision =
            predicted == 0
                ? 0.0
                : static_cast<double>(
                      report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) /
                      static_cast<double>(predicted);
        if (!report.auc_defined) {
            cls.auc = std::numeric_limits<double>::quiet_NaN();
            continue;
        }

        std::vector<double> scores(n);
        std::vector<int> binary(n);
        for (std::size_t k = 0; k < n; ++k) {
            scores[k] = probs[k * kNumClasses + static_cast<std::size_t>(c)];
            binary[k] = labels[k] == c ? 1 : 0;
        }
        cls.roc_points = roc_curve(scores, binary);
        cls.auc = auc(scores, binary);
        const double by_rank = auc_rank(scores, binary);
        if (std::abs(cls.auc - by_rank) > 1e-12) {
            throw std::runtime_error("evaluate: trapezoid AUC " + format_double(cls.auc) +
                                     " disagrees with rank AUC " + format_double(by_rank));
        }
        auc_sum += cls.auc;
    }
    report.auc_macro = report.auc_defined ? auc_sum / kNumClasses
                                          : std::numeric_limits<double>::quiet_NaN();
    return report;
}

void save_model(ModelBundle& model, const std::string& path) {
    const ModelConfig& config = model.config();
    json doc;
    doc["format_version"] = ModelBundle::kFormatVersion;
    json cfg;
    cfg["mode"] = input_mode_name(config.mode);
    cfg["embed_dim"] = config.embed_dim;
    cfg["fusion"] = fusion_name(config.fusion);
    cfg["head_hidden"] = config.head_hidden;
    cfg["encoder"] = encoder_to_json(config.encoder);
    doc["config"] = std::move(cfg);

    json tensors;
    for (const auto& [name, param] : model.params()) {
        json entry;
        entry["shape"] = param->value.shape();
        json data = json::array();
        for (std::size_t i = 0; i < param->value.size(); ++i) data.push_back(param->value[i]);
        entry["data"] = std::move(data);
        tensors[name] = std::move(entry);
    }
    doc["tensors"] = std::move(tensors);

    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << doc.dump() << "\n";
}

ModelBundle load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": invalid JSON: " + e.what());
    }

    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
        throw std::runtime_error(path + ": missing format_version");
    }
    const int version = doc["format_version"].get<int>();
    if (version != ModelBundle::kFormatVersion) {
        throw std::runtime_error(path + ": unsupported format_version " +
                                 std::to_string(version));
    }
    if (!doc.contains("config") || !doc.contains("tensors")) {
        throw std::runtime_error(path + ": missing config or tensors");
    }

    const json& cfg = doc["config"];
    ModelConfig config;
    try {
        config.mode = input_mode_from_name(cfg.at("mode").get<std::string>());
        config.embed_dim = cfg.at("embed_dim").get<std::size_t>();
        config.fusion = fusion_from_name(cfg.at("fusion").get<std::string>());
        config.head_hidden = cfg.at("head_hidden").get<std::size_t>();
        apply_encoder_overrides(config.encoder, cfg.at("encoder"));
        config.validate();
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": malformed config: " + e.what());
    }

    ModelBundle model(config);
    const ParamRefs params = model.params();
    const json& tensors = doc["tensors"];
    for (const auto& [name, param] : params) {
        if (!tensors.contains(name)) {
            throw std::runtime_error(path + ": missing tensor '" + name + "'");
        }
        const json& entry = tensors[name];
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != param->value.shape()) {
            throw std::runtime_error(path + ": tensor '" + name + "' has shape " +
                                     shape_str(shape) + ", expected " +
                                     param->value.shape_str());
        }
        const json& values = entry.at("data");
        if (!values.is_array() || values.size() != param->value.size()) {
            throw std::runtime_error(path + ": tensor '" + name + "' holds " +
                                     std::to_string(values.size()) + " values, expected " +
                                     std::to_string(param->value.size()));
        }
        for (std::size_t i = 0; i < param->value.size(); ++i) {
            param->value[i] = values[i].get<double>();
        }
    }
    if (tensors.size() != params.size()) {
        for (const auto& [name, entry] : tensors.items()) {
            const bool known = std::any_of(params.begin(), params.end(),
                                           [&](const auto& p) { return p.first == name; });
            if (!known) {
                throw std::runtime_error(path + ": unknown tensor '" + name + "'");
            }
        }
    }
    return model;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "epoch,train_loss,val_accuracy\n";
    for (const auto& stats : history) {
        out << stats.epoch << "," << format_double(stats.train_loss) << ","
            << format_double(stats.val_accuracy) << "\n";
    }
}

}  // namespace mmfuse
