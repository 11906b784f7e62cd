#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmfuse/encoders.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tensor.hpp"

namespace mmfuse {

// Class labels are plain ints 0..2 throughout; these name the convention.
inline constexpr int kPositive = 0;
inline constexpr int kNegative = 1;
inline constexpr int kNeutral = 2;
inline constexpr int kNumClasses = 3;

std::string label_name(int label);                  // "positive" / "negative" / "neutral"
int label_from_name(const std::string& name);       // throws on unknown name

// One record of a chat transcript; a log is ordered by strictly increasing
// timestamps.
enum class MessageKind { Text, Image };

struct MessageLogEntry {
    long long timestamp = 0;
    MessageKind kind = MessageKind::Text;
    std::vector<int> tokens;  // Text payload
    Tensor image;             // Image payload
};

struct PairedMessage {
    Tensor image;
    std::vector<int> tokens;
    long long timestamp = 0;  // timestamp of the paired text
};

struct PairingResult {
    std::vector<PairedMessage> pairs;
    std::size_t dropped = 0;  // trailing images with no following text
};

// Pairs every image with the earliest text whose timestamp is strictly
// greater; consecutive images share that text. Trailing images with no
// following text are dropped and counted.
PairingResult pair_messages(const std::vector<MessageLogEntry>& log);

struct RawSample {
    std::string id;
    std::vector<int> tokens;  // ids >= 2
    Tensor image;             // [side x side], values in [0, 1]
    int label = 0;
};

struct EmbeddingSample {
    std::string id;
    Tensor t;  // [d]
    Tensor v;  // [d]
    int label = 0;
};

// How the synthetic generators derive labels from the planted structure.
enum class LabelRule { TextOnly, ImageOnly, Additive, Multiplicative };

std::string rule_name(LabelRule rule);
LabelRule rule_from_name(const std::string& name);  // throws on unknown name

// Per-coordinate standard-normal t and v; the label comes from a threshold
// rule chosen so the three classes are balanced:
//   text-only        t0 against +-tau1,
//   image-only       v0,
//   additive         (t0 + v0) / sqrt(2),
//   multiplicative   t0 * v0 against +-tau_m (cross-modal only: neither
//                    coordinate alone determines the sign of the product).
std::vector<EmbeddingSample> gen_embedding_dataset(LabelRule rule, std::size_t n,
                                                   std::size_t d, std::uint64_t seed);

// Class structure planted in each modality: a marker token from {10, 11, 12}
// at a random position among filler tokens, and one brightened 8x8 quadrant
// (value 0.9 over background noise in [0, 0.2]). Rules:
//   text-only        label = marker class; the image stays pure noise;
//   image-only       label = quadrant class; the tokens stay pure filler;
//   additive         marker and quadrant both carry the label (redundant);
//   multiplicative   label = (marker + quadrant) mod 3, a Latin square, so
//                    either modality alone is uniform over the labels.
std::vector<RawSample> gen_raw_dataset(LabelRule rule, std::size_t n, std::uint64_t seed,
                                       const EncoderConfig& config);

// A dataset holds samples of exactly one kind.
struct Dataset {
    std::vector<EmbeddingSample> embedding;
    std::vector<RawSample> raw;

    bool is_raw() const { return !raw.empty(); }
    std::size_t size() const { return is_raw() ? raw.size() : embedding.size(); }
    int label(std::size_t i) const { return is_raw() ? raw[i].label : embedding[i].label; }
    std::size_t dim() const { return embedding.empty() ? 0 : embedding.front().t.size(); }
};

enum class DatasetFormat { EmbeddingCsv, RawJsonl };

// Infers the format from the file extension: .csv -> embedding-csv,
// .jsonl -> raw-jsonl.
DatasetFormat format_from_path(const std::string& path);

Dataset load_dataset(const std::string& path, DatasetFormat format);
void save_dataset(const Dataset& data, const std::string& path, DatasetFormat format);

// Message logs are JSON lines {"timestamp": int, "kind": "text"|"image",
// "payload": [ints] or [floats]}.
std::vector<MessageLogEntry> load_message_log(const std::string& path);

// Writes pairs as raw-jsonl without labels plus {"paired": n, "dropped": m}.
void save_pairs(const PairingResult& result, const std::string& out_path,
                const std::string& diag_path);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace mmfuse
