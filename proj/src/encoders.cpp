#include "mmfuse/encoders.hpp"

#include <numeric>
#include <stdexcept>

namespace mmfuse {

namespace {

constexpr double kInitStddev = 0.02;

std::vector<int> iota_ids(std::size_t n) {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

}  // namespace

void EncoderConfig::validate() const {
    if (vocab_size < 3) {
        throw std::invalid_argument("EncoderConfig: vocab_size must be >= 3 "
                                    "(ids 0 and 1 are reserved)");
    }
    if (max_seq < 1) throw std::invalid_argument("EncoderConfig: max_seq must be >= 1");
    if (d_model < 1) throw std::invalid_argument("EncoderConfig: d_model must be >= 1");
    if (heads < 1) throw std::invalid_argument("EncoderConfig: heads must be >= 1");
    if (d_model % heads != 0) {
        throw std::invalid_argument("EncoderConfig: d_model " + std::to_string(d_model) +
                                    " not divisible by heads " + std::to_string(heads));
    }
    if (blocks < 1) throw std::invalid_argument("EncoderConfig: blocks must be >= 1");
    if (segments < 1) throw std::invalid_argument("EncoderConfig: segments must be >= 1");
    if (patch_side < 1) throw std::invalid_argument("EncoderConfig: patch_side must be >= 1");
    if (image_side < 1 || image_side % patch_side != 0) {
        throw std::invalid_argument("EncoderConfig: image_side " + std::to_string(image_side) +
                                    " not divisible by patch_side " + std::to_string(patch_side));
    }
    if (proj_dim < 1) throw std::invalid_argument("EncoderConfig: proj_dim must be >= 1");
}

Tensor extract_patches(const Tensor& image, std::size_t patch_side) {
    if (image.rank() != 2 || image.extent(0) != image.extent(1)) {
        throw std::invalid_argument("extract_patches: expected a square image, got " +
                                    image.shape_str());
    }
    const std::size_t side = image.extent(0);
    if (patch_side < 1 || side % patch_side != 0) {
        throw std::invalid_argument("extract_patches: image side " + std::to_string(side) +
                                    " not divisible by patch side " + std::to_string(patch_side));
    }
    const std::size_t grid = side / patch_side;
    Tensor out({grid * grid, patch_side * patch_side});
    for (std::size_t g = 0; g < grid; ++g) {
        for (std::size_t h = 0; h < grid; ++h) {
            double* dst = out.data() + (g * grid + h) * patch_side * patch_side;
            for (std::size_t r = 0; r < patch_side; ++r) {
                const double* src = image.data() + (g * patch_side + r) * side + h * patch_side;
                std::copy_n(src, patch_side, dst + r * patch_side);
            }
        }
    }
    return out;
}

Tensor assemble_patches(const Tensor& patches, std::size_t image_side, std::size_t patch_side) {
    const std::size_t grid = patch_side == 0 ? 0 : image_side / patch_side;
    if (patch_side < 1 || image_side % patch_side != 0 || patches.rank() != 2 ||
        patches.extent(0) != grid * grid || patches.extent(1) != patch_side * patch_side) {
        throw std::invalid_argument("assemble_patches: patches " + patches.shape_str() +
                                    " do not tile a " + std::to_string(image_side) + "x" +
                                    std::to_string(image_side) + " image with patch side " +
                                    std::to_string(patch_side));
    }
    Tensor image({image_side, image_side});
    for (std::size_t g = 0; g < grid; ++g) {
        for (std::size_t h = 0; h < grid; ++h) {
            const double* src = patches.data() + (g * grid + h) * patch_side * patch_side;
            for (std::size_t r = 0; r < patch_side; ++r) {
                double* dst = image.data() + (g * patch_side + r) * image_side + h * patch_side;
                std::copy_n(src + r * patch_side, patch_side, dst);
            }
        }
    }
    return image;
}

// ---------------------------------------------------------------------------
// TextEncoder
// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(const EncoderConfig& config)
    : token_table(config.vocab_size, config.d_model),
      position_table(config.max_seq + 1, config.d_model),
      segment_table(config.segments, config.d_model),
      proj(config.d_model, config.proj_dim),
      config_(config) {
    config.validate();
    blocks.reserve(config.blocks);
    for (std::size_t b = 0; b < config.blocks; ++b) {
        blocks.emplace_back(config.d_model, config.heads, config.ffn_hidden());
    }
}

Tensor TextEncoder::forward(const std::vector<int>& tokens,
                            const std::vector<int>& segment_ids) {
    if (tokens.size() > config_.max_seq) {
        throw std::invalid_argument("TextEncoder: " + std::to_string(tokens.size()) +
                                    " tokens exceed max_seq " + std::to_string(config_.max_seq));
    }
    for (int id : tokens) {
        if (id == kClsTokenId) {
            throw std::invalid_argument("TextEncoder: token id 0 is reserved for CLS");
        }
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw std::invalid_argument("TextEncoder: token id " + std::to_string(id) +
                                        " out of range [0, " +
                                        std::to_string(config_.vocab_size) + ")");
        }
    }
    if (!segment_ids.empty() && segment_ids.size() != tokens.size()) {
        throw std::invalid_argument("TextEncoder: " + std::to_string(segment_ids.size()) +
                                    " segment ids for " + std::to_string(tokens.size()) +
                                    " tokens");
    }

    const std::size_t seq = tokens.size() + 1;  // CLS prepended
    std::vector<int> ids(seq, kClsTokenId);
    std::copy(tokens.begin(), tokens.end(), ids.begin() + 1);
    std::vector<int> segs(seq, 0);
    if (!segment_ids.empty()) {
        std::copy(segment_ids.begin(), segment_ids.end(), segs.begin() + 1);
    }
    std::vector<bool> mask(seq, false);
    for (std::size_t i = 0; i < seq; ++i) mask[i] = (ids[i] == kPadTokenId);

    Tensor x = token_table.forward(ids);
    x = add(x, position_table.forward(iota_ids(seq)));
    x = add(x, segment_table.forward(segs));
    for (auto& block : blocks) x = block.forward(x, mask);

    Tensor cls({1, config_.d_model});
    std::copy_n(x.data(), config_.d_model, cls.data());
    cache_seq_ = seq;
    has_cache_ = true;
    return reshape(proj.forward(cls), {config_.proj_dim});
}

void TextEncoder::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw std::logic_error("TextEncoder: backward called before forward");
    }
    if (grad_out.rank() != 1 || grad_out.extent(0) != config_.proj_dim) {
        throw std::invalid_argument("TextEncoder: gradient shape " + grad_out.shape_str() +
                                    " does not match output length " +
                                    std::to_string(config_.proj_dim));
    }
    Tensor g_cls = proj.backward(reshape(grad_out, {1, config_.proj_dim}));
    Tensor g_x({cache_seq_, config_.d_model});
    std::copy_n(g_cls.data(), config_.d_model, g_x.data());
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g_x = it->backward(g_x);
    token_table.backward(g_x);
    position_table.backward(g_x);
    segment_table.backward(g_x);
}

void TextEncoder::init(Rng& rng, double stddev) {
    token_table.init(rng, stddev);
    position_table.init(rng, stddev);
    segment_table.init(rng, stddev);
    for (auto& block : blocks) block.init(rng, stddev);
    proj.init(rng, stddev);
}

void TextEncoder::collect_params(const std::string& prefix, ParamRefs& out) {
    token_table.collect_params(prefix + ".token_table", out);
    position_table.collect_params(prefix + ".position_table", out);
    segment_table.collect_params(prefix + ".segment_table", out);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        blocks[b].collect_params(prefix + ".block" + std::to_string(b), out);
    }
    proj.collect_params(prefix + ".proj", out);
}

// ---------------------------------------------------------------------------
// ImageEncoder
// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(const EncoderConfig& config)
    : patch_proj(config.patch_side * config.patch_side, config.d_model),
      cls_vector({config.d_model}),
      position_table(config.patch_count() + 1, config.d_model),
      proj(config.d_model, config.proj_dim),
      config_(config) {
    config.validate();
    blocks.reserve(config.blocks);
    for (std::size_t b = 0; b < config.blocks; ++b) {
        blocks.emplace_back(config.d_model, config.heads, config.ffn_hidden());
    }
}

Tensor ImageEncoder::forward(const Tensor& image) {
    if (image.rank() != 2 || image.extent(0) != config_.image_side ||
        image.extent(1) != config_.image_side) {
        throw std::invalid_argument("ImageEncoder: expected a " +
                                    std::to_string(config_.image_side) + "x" +
                                    std::to_string(config_.image_side) + " image, got " +
                                    image.shape_str());
    }
    if (!all_finite(image)) {
        throw std::invalid_argument("ImageEncoder: image contains non-finite values");
    }

    const std::size_t seq = config_.patch_count() + 1;
    Tensor tokens = patch_proj.forward(extract_patches(image, config_.patch_side));
    Tensor x({seq, config_.d_model});
    std::copy_n(cls_vector.value.data(), config_.d_model, x.data());
    std::copy_n(tokens.data(), tokens.size(), x.data() + config_.d_model);
    x = add(x, position_table.forward(iota_ids(seq)));
    for (auto& block : blocks) x = block.forward(x);

    Tensor cls({1, config_.d_model});
    std::copy_n(x.data(), config_.d_model, cls.data());
    has_cache_ = true;
    return reshape(proj.forward(cls), {config_.proj_dim});
}

void ImageEncoder::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw std::logic_error("ImageEncoder: backward called before forward");
    }
    if (grad_out.rank() != 1 || grad_out.extent(0) != config_.proj_dim) {
        throw std::invalid_argument("ImageEncoder: gradient shape " + grad_out.shape_str() +
                                    " does not match output length " +
                                    std::to_string(config_.proj_dim));
    }
    const std::size_t seq = config_.patch_count() + 1;
    Tensor g_cls = proj.backward(reshape(grad_out, {1, config_.proj_dim}));
    Tensor g_x({seq, config_.d_model});
    std::copy_n(g_cls.data(), config_.d_model, g_x.data());
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g_x = it->backward(g_x);
    position_table.backward(g_x);
    for (std::size_t c = 0; c < config_.d_model; ++c) cls_vector.grad[c] += g_x[c];
    Tensor g_tokens({seq - 1, config_.d_model});
    std::copy_n(g_x.data() + config_.d_model, g_tokens.size(), g_tokens.data());
    patch_proj.backward(g_tokens);  // pixels are inputs, not parameters
}

void ImageEncoder::init(Rng& rng, double stddev) {
    patch_proj.init(rng, stddev);
    for (std::size_t c = 0; c < cls_vector.value.size(); ++c) {
        cls_vector.value[c] = stddev * rng.next_normal();
    }
    position_table.init(rng, stddev);
    for (auto& block : blocks) block.init(rng, stddev);
    proj.init(rng, stddev);
}

void ImageEncoder::collect_params(const std::string& prefix, ParamRefs& out) {
    patch_proj.collect_params(prefix + ".patch_proj", out);
    out.emplace_back(prefix + ".cls", &cls_vector);
    position_table.collect_params(prefix + ".position_table", out);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        blocks[b].collect_params(prefix + ".block" + std::to_string(b), out);
    }
    proj.collect_params(prefix + ".proj", out);
}

std::pair<TextEncoder, ImageEncoder> init_encoders(const EncoderConfig& config, Rng& rng) {
    config.validate();
    TextEncoder text(config);
    ImageEncoder image(config);
    text.init(rng, kInitStddev);
    image.init(rng, kInitStddev);
    return {std::move(text), std::move(image)};
}

}  // namespace mmfuse
