#include "mmfuse/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mmfuse {

namespace {

using nlohmann::json;

// Class-balance thresholds for the embedding generator, frozen from
// high-precision quadrature so all three classes carry probability 1/3:
// tau1 solves Phi(tau1) = 2/3 for a standard normal; tau_m solves
// P(|XY| <= tau_m) = 1/3 for the product of two independent standard
// normals (density 2*K0(|z|)/pi).
constexpr double kTau1 = 0.43072729929545749021;
constexpr double kTauM = 0.18682434416080840386;

constexpr int kMarkerBase = 10;      // marker tokens 10, 11, 12
constexpr int kFillerBase = 13;      // filler tokens drawn from [13, vocab)
constexpr double kBright = 0.9;      // brightened quadrant value
constexpr double kNoiseCeil = 0.2;   // background noise upper bound

int threshold_label(double x, double tau) {
    if (x > tau) return kPositive;
    if (x < -tau) return kNegative;
    return kNeutral;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& path, std::size_t line, const std::string& field) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        fail_at(path, line, "invalid number '" + field + "'");
    }
    if (!std::isfinite(value)) {
        fail_at(path, line, "non-finite value '" + field + "'");
    }
    return value;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    return out;
}

json parse_json_line(const std::string& path, std::size_t line, const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail_at(path, line, std::string("invalid JSON: ") + e.what());
    }
}

const json& require_key(const std::string& path, std::size_t line, const json& obj,
                        const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        fail_at(path, line, std::string("missing key '") + key + "'");
    }
    return *it;
}

std::vector<int> parse_tokens(const std::string& path, std::size_t line, const json& arr) {
    if (!arr.is_array()) fail_at(path, line, "'tokens' must be an array");
    std::vector<int> tokens;
    tokens.reserve(arr.size());
    for (const auto& item : arr) {
        if (!item.is_number_integer()) fail_at(path, line, "token ids must be integers");
        const long long id = item.get<long long>();
        if (id < 2) {
            fail_at(path, line, "token id " + std::to_string(id) +
                                    " below 2 (ids 0 and 1 are reserved)");
        }
        tokens.push_back(static_cast<int>(id));
    }
    return tokens;
}

Tensor parse_image(const std::string& path, std::size_t line, const json& arr) {
    if (!arr.is_array()) fail_at(path, line, "'image' must be an array");
    const std::size_t side = 16;
    if (arr.size() != side * side) {
        fail_at(path, line, "'image' must hold " + std::to_string(side * side) +
                                " values, got " + std::to_string(arr.size()));
    }
    Tensor image({side, side});
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) fail_at(path, line, "image values must be numbers");
        const double v = arr[i].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) {
            fail_at(path, line, "image value " + format_double(v) + " outside [0, 1]");
        }
        image[i] = v;
    }
    return image;
}

json image_to_json(const Tensor& image) {
    json arr = json::array();
    for (std::size_t i = 0; i < image.size(); ++i) arr.push_back(image[i]);
    return arr;
}

}  // namespace

std::string label_name(int label) {
    switch (label) {
        case kPositive: return "positive";
        case kNegative: return "negative";
        case kNeutral: return "neutral";
        default:
            throw std::invalid_argument("label " + std::to_string(label) +
                                        " out of range [0, 3)");
    }
}

int label_from_name(const std::string& name) {
    if (name == "positive") return kPositive;
    if (name == "negative") return kNegative;
    if (name == "neutral") return kNeutral;
    throw std::invalid_argument("unknown label '" + name +
                                "' (expected positive, negative, or neutral)");
}

std::string rule_name(LabelRule rule) {
    switch (rule) {
        case LabelRule::TextOnly: return "text-only";
        case LabelRule::ImageOnly: return "image-only";
        case LabelRule::Additive: return "additive";
        case LabelRule::Multiplicative: return "multiplicative";
    }
    throw std::invalid_argument("rule_name: invalid LabelRule");
}

LabelRule rule_from_name(const std::string& name) {
    if (name == "text-only") return LabelRule::TextOnly;
    if (name == "image-only") return LabelRule::ImageOnly;
    if (name == "additive") return LabelRule::Additive;
    if (name == "multiplicative") return LabelRule::Multiplicative;
    throw std::invalid_argument("unknown label rule '" + name +
                                "' (expected text-only, image-only, additive, "
                                "or multiplicative)");
}

PairingResult pair_messages(const std::vector<MessageLogEntry>& log) {
    for (std::size_t i = 1; i < log.size(); ++i) {
        if (log[i].timestamp <= log[i - 1].timestamp) {
            throw std::invalid_argument(
                "pair_messages: timestamps not strictly increasing at entry " +
                std::to_string(i) + " (" + std::to_string(log[i - 1].timestamp) + " then " +
                std::to_string(log[i].timestamp) + ")");
        }
    }
    PairingResult result;
    std::vector<const MessageLogEntry*> pending;
    for (const auto& entry : log) {
        if (entry.kind == MessageKind::Image) {
            pending.push_back(&entry);
            continue;
        }
        for (const MessageLogEntry* image : pending) {
            result.pairs.push_back({image->image, entry.tokens, entry.timestamp});
        }
        pending.clear();
    }
    result.dropped = pending.size();
    return result;
}

std::vector<EmbeddingSample> gen_embedding_dataset(LabelRule rule, std::size_t n,
                                                   std::size_t d, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_embedding_dataset: n must be >= 1");
    if (d < 2) throw std::invalid_argument("gen_embedding_dataset: d must be >= 2");

    Rng rng(seed);
    std::vector<EmbeddingSample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        EmbeddingSample s;
        s.id = "e" + std::to_string(i);
        s.t = rng_normal(rng, {d});
        s.v = rng_normal(rng, {d});
        switch (rule) {
            case LabelRule::TextOnly: s.label = threshold_label(s.t[0], kTau1); break;
            case LabelRule::ImageOnly: s.label = threshold_label(s.v[0], kTau1); break;
            case LabelRule::Additive:
                s.label = threshold_label((s.t[0] + s.v[0]) / std::sqrt(2.0), kTau1);
                break;
            case LabelRule::Multiplicative:
                s.label = threshold_label(s.t[0] * s.v[0], kTauM);
                break;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<RawSample> gen_raw_dataset(LabelRule rule, std::size_t n, std::uint64_t seed,
                                       const EncoderConfig& config) {
    if (n < 1) throw std::invalid_argument("gen_raw_dataset: n must be >= 1");
    config.validate();
    if (config.vocab_size <= kFillerBase) {
        throw std::invalid_argument("gen_raw_dataset: vocab_size must exceed " +
                                    std::to_string(kFillerBase) + " to leave filler tokens");
    }

    const std::size_t side = config.image_side;
    const std::size_t half = side / 2;
    const std::size_t max_fill = std::min<std::size_t>(12, config.max_seq - 1);
    const std::size_t min_fill = std::min<std::size_t>(4, max_fill);
    const bool wants_marker = rule != LabelRule::ImageOnly;
    const bool wants_quadrant = rule != LabelRule::TextOnly;

    Rng rng(seed);
    std::vector<RawSample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RawSample s;
        s.id = "r" + std::to_string(i);

        const std::size_t fill = min_fill + rng.next_below(max_fill - min_fill + 1);
        s.tokens.resize(fill);
        for (auto& id : s.tokens) {
            id = kFillerBase + static_cast<int>(rng.next_below(config.vocab_size - kFillerBase));
        }

        int marker = 0, quadrant = 0;
        switch (rule) {
            case LabelRule::TextOnly:
                marker = static_cast<int>(rng.next_below(3));
                s.label = marker;
                break;
            case LabelRule::ImageOnly:
                quadrant = static_cast<int>(rng.next_below(3));
                s.label = quadrant;
                break;
            case LabelRule::Additive:
                marker = quadrant = static_cast<int>(rng.next_below(3));
                s.label = marker;
                break;
            case LabelRule::Multiplicative:
                marker = static_cast<int>(rng.next_below(3));
                quadrant = static_cast<int>(rng.next_below(3));
                s.label = (marker + quadrant) % 3;
                break;
        }
        if (wants_marker) {
            const std::size_t pos = rng.next_below(fill + 1);
            s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                            kMarkerBase + marker);
        }

        s.image = Tensor({side, side});
        for (std::size_t p = 0; p < s.image.size(); ++p) {
            s.image[p] = rng.next_uniform(0.0, kNoiseCeil);
        }
        if (wants_quadrant) {
            // Quadrant classes 0, 1, 2 map to the top-left, top-right, and
            // bottom-left regions; three regions keep label = (marker +
            // quadrant) mod 3 a Latin square with uniform marginals.
            const std::size_t r0 = quadrant == 2 ? half : 0;
            const std::size_t c0 = quadrant == 1 ? half : 0;
            for (std::size_t r = r0; r < r0 + half; ++r) {
                for (std::size_t c = c0; c < c0 + half; ++c) {
                    s.image[r * side + c] = kBright;
                }
            }
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

DatasetFormat format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
        return DatasetFormat::EmbeddingCsv;
    }
    if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") {
        return DatasetFormat::RawJsonl;
    }
    throw std::runtime_error("cannot infer dataset format of " + path +
                             " (expected a .csv or .jsonl extension)");
}

namespace {

Dataset load_embedding_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw std::runtime_error(path + ": no samples");
    }

    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 4 || header.size() % 2 != 0 || header[0] != "id" ||
        header[1] != "label") {
        fail_at(path, 1, "malformed header (expected id,label,t_0,...,v_0,...)");
    }
    const std::size_t d = (header.size() - 2) / 2;
    for (std::size_t k = 0; k < d; ++k) {
        if (header[2 + k] != "t_" + std::to_string(k) ||
            header[2 + d + k] != "v_" + std::to_string(k)) {
            fail_at(path, 1, "malformed header (expected id,label,t_0,...,v_0,...)");
        }
    }

    Dataset data;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            fail_at(path, line_no, "expected " + std::to_string(header.size()) +
                                       " fields, got " + std::to_string(fields.size()));
        }
        EmbeddingSample s;
        s.id = fields[0];
        try {
            s.label = label_from_name(fields[1]);
        } catch (const std::invalid_argument& e) {
            fail_at(path, line_no, e.what());
        }
        s.t = Tensor({d});
        s.v = Tensor({d});
        for (std::size_t k = 0; k < d; ++k) {
            s.t[k] = parse_double(path, line_no, fields[2 + k]);
            s.v[k] = parse_double(path, line_no, fields[2 + d + k]);
        }
        data.embedding.push_back(std::move(s));
    }
    if (data.embedding.empty()) {
        throw std::runtime_error(path + ": no samples");
    }
    return data;
}

Dataset load_raw_jsonl(const std::string& path) {
    std::ifstream in = open_input(path);
    Dataset data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json obj = parse_json_line(path, line_no, line);
        if (!obj.is_object()) fail_at(path, line_no, "expected a JSON object");

        RawSample s;
        const json& id = require_key(path, line_no, obj, "id");
        if (!id.is_string()) fail_at(path, line_no, "'id' must be a string");
        s.id = id.get<std::string>();
        s.tokens = parse_tokens(path, line_no, require_key(path, line_no, obj, "tokens"));
        s.image = parse_image(path, line_no, require_key(path, line_no, obj, "image"));
        const json& label = require_key(path, line_no, obj, "label");
        if (!label.is_string()) fail_at(path, line_no, "'label' must be a string");
        try {
            s.label = label_from_name(label.get<std::string>());
        } catch (const std::invalid_argument& e) {
            fail_at(path, line_no, e.what());
        }
        data.raw.push_back(std::move(s));
    }
    if (data.raw.empty()) {
        throw std::runtime_error(path + ": no samples");
    }
    return data;
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
    return format == DatasetFormat::EmbeddingCsv ? load_embedding_csv(path)
                                                 : load_raw_jsonl(path);
}

void save_dataset(const Dataset& data, const std::string& path, DatasetFormat format) {
    if (data.size() == 0) {
        throw std::invalid_argument("save_dataset: no samples");
    }
    if (format == DatasetFormat::EmbeddingCsv) {
        if (data.is_raw()) {
            throw std::invalid_argument("save_dataset: embedding-csv cannot hold raw samples");
        }
        std::ofstream out = open_output(path);
        const std::size_t d = data.dim();
        out << "id,label";
        for (std::size_t k = 0; k < d; ++k) out << ",t_" << k;
        for (std::size_t k = 0; k < d; ++k) out << ",v_" << k;
        out << "\n";
        for (const auto& s : data.embedding) {
            if (s.t.size() != d || s.v.size() != d) {
                throw std::invalid_argument("save_dataset: sample " + s.id +
                                            " has inconsistent dimension");
            }
            out << s.id << "," << label_name(s.label);
            for (std::size_t k = 0; k < d; ++k) out << "," << format_double(s.t[k]);
            for (std::size_t k = 0; k < d; ++k) out << "," << format_double(s.v[k]);
            out << "\n";
        }
        return;
    }
    if (!data.is_raw()) {
        throw std::invalid_argument("save_dataset: raw-jsonl cannot hold embedding samples");
    }
    std::ofstream out = open_output(path);
    for (const auto& s : data.raw) {
        json obj;
        obj["id"] = s.id;
        obj["tokens"] = s.tokens;
        obj["image"] = image_to_json(s.image);
        obj["label"] = label_name(s.label);
        out << obj.dump() << "\n";
    }
}

std::vector<MessageLogEntry> load_message_log(const std::string& path) {
    std::ifstream in = open_input(path);
    std::vector<MessageLogEntry> log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json obj = parse_json_line(path, line_no, line);
        if (!obj.is_object()) fail_at(path, line_no, "expected a JSON object");

        MessageLogEntry entry;
        const json& ts = require_key(path, line_no, obj, "timestamp");
        if (!ts.is_number_integer()) fail_at(path, line_no, "'timestamp' must be an integer");
        entry.timestamp = ts.get<long long>();

        const json& kind = require_key(path, line_no, obj, "kind");
        const json& payload = require_key(path, line_no, obj, "payload");
        if (kind == "text") {
            entry.kind = MessageKind::Text;
            entry.tokens = parse_tokens(path, line_no, payload);
        } else if (kind == "image") {
            entry.kind = MessageKind::Image;
            entry.image = parse_image(path, line_no, payload);
        } else {
            fail_at(path, line_no, "'kind' must be \"text\" or \"image\"");
        }
        log.push_back(std::move(entry));
    }
    return log;
}

void save_pairs(const PairingResult& result, const std::string& out_path,
                const std::string& diag_path) {
    std::ofstream out = open_output(out_path);
    std::size_t index = 0;
    for (const auto& pair : result.pairs) {
        json obj;
        obj["id"] = "p" + std::to_string(index++);
        obj["tokens"] = pair.tokens;
        obj["image"] = image_to_json(pair.image);
        out << obj.dump() << "\n";
    }
    std::ofstream diag = open_output(diag_path);
    json summary;
    summary["paired"] = result.pairs.size();
    summary["dropped"] = result.dropped;
    diag << summary.dump(2) << "\n";
}

std::string format_double(double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) {
        throw std::runtime_error("format_double: conversion failed");
    }
    return std::string(buf, ptr);
}

}  // namespace mmfuse
