#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmfuse/layers.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tensor.hpp"

namespace mmfuse {

// Reserved token ids; generators and callers use ids >= 2.
inline constexpr int kClsTokenId = 0;
inline constexpr int kPadTokenId = 1;

struct EncoderConfig {
    std::size_t vocab_size = 256;
    std::size_t max_seq = 32;
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t segments = 2;
    std::size_t image_side = 16;
    std::size_t patch_side = 4;
    std::size_t proj_dim = 8;

    std::size_t ffn_hidden() const { return 4 * d_model; }
    std::size_t grid_side() const { return image_side / patch_side; }
    std::size_t patch_count() const { return grid_side() * grid_side(); }

    // Throws invalid_argument naming the first violated invariant.
    void validate() const;
};

// Splits a square image into non-overlapping patch_side x patch_side tiles,
// row-major over the tile grid, each tile flattened row-major: output row
// g*grid + h holds the tile covering rows [g*p, (g+1)*p), cols [h*p, (h+1)*p).
Tensor extract_patches(const Tensor& image, std::size_t patch_side);

// Inverse of extract_patches; together they form a bijection on images.
Tensor assemble_patches(const Tensor& patches, std::size_t image_side,
                        std::size_t patch_side);

// BERT-style encoder: per position the token, position, and segment
// embeddings are summed, a CLS token is prepended, transformer blocks run
// with PAD positions masked out of attention, and the CLS vector is
// projected to proj_dim.
class TextEncoder {
public:
    explicit TextEncoder(const EncoderConfig& config);

    // tokens must not contain the reserved CLS id; PAD tokens are allowed
    // anywhere and are masked out (padding never changes the output).
    // segment_ids, if non-empty, parallels tokens; empty means all zero.
    Tensor forward(const std::vector<int>& tokens, const std::vector<int>& segment_ids = {});
    void backward(const Tensor& grad_out);
    void init(Rng& rng, double stddev);
    void collect_params(const std::string& prefix, ParamRefs& out);

    EmbeddingTable token_table;     // [vocab_size x d_model]
    EmbeddingTable position_table;  // [max_seq + 1 x d_model]
    EmbeddingTable segment_table;   // [segments x d_model]
    std::vector<TransformerBlock> blocks;
    Linear proj;                    // d_model -> proj_dim

private:
    EncoderConfig config_;
    std::size_t cache_seq_ = 0;
    bool has_cache_ = false;
};

// ViT-style encoder: flattened patches are linearly projected, a learned
// CLS vector is prepended, position embeddings added, transformer blocks
// applied, and the CLS vector projected to proj_dim.
class ImageEncoder {
public:
    explicit ImageEncoder(const EncoderConfig& config);

    Tensor forward(const Tensor& image);  // [image_side x image_side]
    void backward(const Tensor& grad_out);
    void init(Rng& rng, double stddev);
    void collect_params(const std::string& prefix, ParamRefs& out);

    Linear patch_proj;              // patch_side^2 -> d_model
    Param cls_vector;               // [d_model]
    EmbeddingTable position_table;  // [patch_count + 1 x d_model]
    std::vector<TransformerBlock> blocks;
    Linear proj;                    // d_model -> proj_dim

private:
    EncoderConfig config_;
    bool has_cache_ = false;
};

// Builds both encoders with every weight drawn Normal(0, 0.02^2) in a fixed
// order (text tables, text blocks, text proj, then the image encoder);
// biases and LayerNorm offsets start at zero, gains at one.
std::pair<TextEncoder, ImageEncoder> init_encoders(const EncoderConfig& config, Rng& rng);

}  // namespace mmfuse
