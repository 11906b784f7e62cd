#pragma once

#include <optional>
#include <string>

#include "mmfuse/data.hpp"
#include "mmfuse/encoders.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/layers.hpp"

namespace mmfuse {

// Whether the model consumes precomputed embedding pairs directly or runs
// the text/image encoders over raw samples.
enum class InputMode { Embedding, Raw };

std::string input_mode_name(InputMode mode);
InputMode input_mode_from_name(const std::string& name);

struct ModelConfig {
    InputMode mode = InputMode::Embedding;
    std::size_t embed_dim = 8;     // modality vector length in Embedding mode
    EncoderConfig encoder;         // architecture in Raw mode
    FusionKind fusion = FusionKind::TensorProduct;
    std::size_t head_hidden = 32;

    // Length of the modality vectors the fusion stage sees.
    std::size_t modality_dim() const {
        return mode == InputMode::Raw ? encoder.proj_dim : embed_dim;
    }
    void validate() const;
};

// The assembled network: optional encoders, a fusion stage, and an MLP head
// (fused -> head_hidden -> 3 with GELU between) ending in a softmax. The
// head input width is fixed by the fusion kind at construction.
class ModelBundle {
public:
    static constexpr int kFormatVersion = 1;

    ModelBundle(const ModelConfig& config, Rng& rng);  // Normal(0, 0.02^2) weights
    explicit ModelBundle(const ModelConfig& config);   // zero weights (deserialization)

    Tensor forward(const EmbeddingSample& sample);  // probs over the 3 classes
    Tensor forward(const RawSample& sample);

    // Cross-entropy against label on the cached forward; accumulates grads
    // through head, fusion, and whichever encoders the fusion kind uses,
    // scaling every gradient by grad_scale (1/batch for minibatch means).
    // Returns the sample's unscaled loss.
    double backward(int label, double grad_scale = 1.0);

    ParamRefs params();  // stable names, stable order
    void zero_grads();

    const ModelConfig& config() const { return config_; }
    const Tensor& last_probs() const;

private:
    Tensor head_probs(const Tensor& t, const Tensor& v);

    ModelConfig config_;
    std::optional<TextEncoder> text_;
    std::optional<ImageEncoder> image_;
    FusionOp fusion_;
    FeedForward head_;
    Tensor probs_;
    bool has_forward_ = false;
    bool ran_text_ = false;
    bool ran_image_ = false;
};

}  // namespace mmfuse
