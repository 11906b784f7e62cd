#include "mmfuse/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mmfuse {

namespace {
constexpr double kInitStddev = 0.02;
}

std::string input_mode_name(InputMode mode) {
    return mode == InputMode::Embedding ? "embedding" : "raw";
}

InputMode input_mode_from_name(const std::string& name) {
    if (name == "embedding") return InputMode::Embedding;
    if (name == "raw") return InputMode::Raw;
    throw std::invalid_argument("unknown input mode '" + name +
                                "' (expected embedding or raw)");
}

void ModelConfig::validate() const {
    if (mode == InputMode::Raw) {
        encoder.validate();
    } else if (embed_dim < 1) {
        throw std::invalid_argument("ModelConfig: embed_dim must be >= 1");
    }
    if (head_hidden < 1) {
        throw std::invalid_argument("ModelConfig: head_hidden must be >= 1");
    }
}

ModelBundle::ModelBundle(const ModelConfig& config)
    : config_(config),
      fusion_(config.fusion),
      head_(fused_dim(config.fusion, config.modality_dim()), config.head_hidden,
            kNumClasses) {
    config.validate();
    if (config_.mode == InputMode::Raw) {
        text_.emplace(config_.encoder);
        image_.emplace(config_.encoder);
    }
}

ModelBundle::ModelBundle(const ModelConfig& config, Rng& rng) : ModelBundle(config) {
    if (text_) text_->init(rng, kInitStddev);
    if (image_) image_->init(rng, kInitStddev);
    head_.init(rng, kInitStddev);
}

Tensor ModelBundle::head_probs(const Tensor& t, const Tensor& v) {
    Tensor fused = fusion_.forward(t, v);
    Tensor logits = head_.forward(reshape(fused, {1, fused.size()}));
    probs_ = reshape(softmax_rows(logits), {static_cast<std::size_t>(kNumClasses)});
    has_forward_ = true;
    return probs_;
}

Tensor ModelBundle::forward(const EmbeddingSample& sample) {
    if (config_.mode != InputMode::Embedding) {
        throw std::invalid_argument("ModelBundle: raw-mode model given an embedding sample");
    }
    if (sample.t.size() != config_.embed_dim || sample.v.size() != config_.embed_dim) {
        throw std::invalid_argument("ModelBundle: sample " + sample.id + " has vectors " +
                                    sample.t.shape_str() + "/" + sample.v.shape_str() +
                                    ", expected length " + std::to_string(config_.embed_dim));
    }
    ran_text_ = ran_image_ = false;
    return head_probs(sample.t, sample.v);
}

Tensor ModelBundle::forward(const RawSample& sample) {
    if (config_.mode != InputMode::Raw) {
        throw std::invalid_argument("ModelBundle: embedding-mode model given a raw sample");
    }
    // Unimodal kinds skip the unused encoder entirely; its parameters then
    // see exactly zero gradient.
    ran_text_ = config_.fusion != FusionKind::ImageOnly;
    ran_image_ = config_.fusion != FusionKind::TextOnly;
    Tensor t = ran_text_ ? text_->forward(sample.tokens)
                         : Tensor({config_.encoder.proj_dim});
    Tensor v = ran_image_ ? image_->forward(sample.image)
                          : Tensor({config_.encoder.proj_dim});
    return head_probs(t, v);
}

double ModelBundle::backward(int label, double grad_scale) {
    if (!has_forward_) {
        throw std::logic_error("ModelBundle: backward called before forward");
    }
    if (label < 0 || label >= kNumClasses) {
        throw std::invalid_argument("ModelBundle: label " + std::to_string(label) +
                                    " out of range [0, 3)");
    }

    Tensor g_logits({1, static_cast<std::size_t>(kNumClasses)});
    for (int c = 0; c < kNumClasses; ++c) {
        g_logits[static_cast<std::size_t>(c)] =
            grad_scale * (probs_[static_cast<std::size_t>(c)] - (c == label ? 1.0 : 0.0));
    }
    Tensor g_fused = head_.backward(g_logits);
    auto [g_t, g_v] = fusion_.backward(reshape(g_fused, {g_fused.size()}));
    if (ran_text_) text_->backward(g_t);
    if (ran_image_) image_->backward(g_v);
    return -std::log(probs_[static_cast<std::size_t>(label)]);
}

ParamRefs ModelBundle::params() {
    ParamRefs refs;
    if (text_) text_->collect_params("text", refs);
    if (image_) image_->collect_params("image", refs);
    head_.collect_params("head", refs);
    return refs;
}

void ModelBundle::zero_grads() {
    for (auto& [name, param] : params()) param->zero_grad();
}

const Tensor& ModelBundle::last_probs() const {
    if (!has_forward_) {
        throw std::logic_error("ModelBundle: no forward pass has run");
    }
    return probs_;
}

}  // namespace mmfuse
