#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmfuse/rng.hpp"
#include "mmfuse/tensor.hpp"

namespace mmfuse {

// One trainable tensor with a same-shaped gradient accumulator. backward()
// accumulates into grad; callers zero grads between steps.
struct Param {
    Tensor value;
    Tensor grad;

    Param() = default;
    explicit Param(std::vector<std::size_t> shape) : value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<std::pair<std::string, Param*>>;

double gelu(double x);
double gelu_grad(double x);

// y = x W + b applied row-wise; accepts any input whose last extent is the
// input width ([batch x d] or [batch x seq x d]).
class Linear {
public:
    Linear(std::size_t d_in, std::size_t d_out);

    void init(Rng& rng, double stddev);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    std::size_t d_in() const { return d_in_; }
    std::size_t d_out() const { return d_out_; }

    Param weight;  // [d_in x d_out]
    Param bias;    // [d_out]

private:
    std::size_t d_in_, d_out_;
    Tensor cache_x_;
    bool has_cache_ = false;
};

// Row lookup table; backward scatters the output gradient back into the
// looked-up rows.
class EmbeddingTable {
public:
    EmbeddingTable(std::size_t rows, std::size_t dim);

    void init(Rng& rng, double stddev);
    Tensor forward(const std::vector<int>& ids);  // [ids.size() x dim]
    void backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }

    Param table;  // [rows x dim]

private:
    std::size_t rows_, dim_;
    std::vector<int> cache_ids_;
    bool has_cache_ = false;
};

// Normalizes each row of the last axis to zero mean / unit variance, then
// applies the learned affine gain and bias.
class LayerNorm {
public:
    explicit LayerNorm(std::size_t dim, double epsilon = 1e-5);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    Param gain;  // [dim], ones
    Param bias;  // [dim], zeros

private:
    std::size_t dim_;
    double epsilon_;
    Tensor cache_xhat_;
    std::vector<double> cache_inv_std_;
    bool has_cache_ = false;
};

// Scaled dot-product self-attention with h heads over a [seq x d] input.
// Scale is 1/sqrt(d/h). key_mask marks key positions excluded from
// attention (their scores get -1e9 before the softmax).
class MultiHeadSelfAttention {
public:
    MultiHeadSelfAttention(std::size_t d_model, std::size_t heads);

    void init(Rng& rng, double stddev);
    Tensor forward(const Tensor& x, const std::vector<bool>& key_mask = {});
    Tensor backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    // softmaxed score matrices of the last forward, one per head
    const std::vector<Tensor>& attention_weights() const { return cache_attn_; }

    Param wq, wk, wv, wo;  // [d x d] each

private:
    std::size_t d_model_, heads_, head_dim_;
    Tensor cache_x_, cache_q_, cache_k_, cache_v_, cache_ctx_;
    std::vector<Tensor> cache_attn_;
    bool has_cache_ = false;
};

// Two linears with GELU between: d_in -> hidden -> d_out.
class FeedForward {
public:
    FeedForward(std::size_t d_in, std::size_t hidden, std::size_t d_out);

    void init(Rng& rng, double stddev);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    Linear fc1, fc2;

private:
    Tensor cache_pre_act_;
    bool has_cache_ = false;
};

// Pre-norm transformer block: x + MHSA(LN(x)), then y + FFN(LN(y)).
class TransformerBlock {
public:
    TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t ffn_hidden);

    void init(Rng& rng, double stddev);
    Tensor forward(const Tensor& x, const std::vector<bool>& key_mask = {});
    Tensor backward(const Tensor& grad_out);
    void collect_params(const std::string& prefix, ParamRefs& out);

    LayerNorm ln1, ln2;
    MultiHeadSelfAttention attn;
    FeedForward ffn;
};

struct CrossEntropyResult {
    double loss;         // mean over the batch of -log softmax(logits)[label]
    Tensor grad_logits;  // (softmax - onehot) / batch
};

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace mmfuse
