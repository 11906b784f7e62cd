#include "mmfuse/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mmfuse {

namespace {

constexpr double kMaskScore = -1e9;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2*pi)

void require_cache(bool has_cache, const char* who) {
    if (!has_cache) {
        throw std::logic_error(std::string(who) + ": backward called before forward");
    }
}

std::size_t rows_for_width(const Tensor& x, std::size_t width, const char* who) {
    if (x.rank() == 0 || x.shape().back() != width) {
        throw std::invalid_argument(std::string(who) + ": last extent of " + x.shape_str() +
                                    " does not match width " + std::to_string(width));
    }
    return x.size() / width;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::size_t d_in, std::size_t d_out)
    : weight({d_in, d_out}), bias({d_out}), d_in_(d_in), d_out_(d_out) {}

void Linear::init(Rng& rng, double stddev) {
    for (std::size_t i = 0; i < weight.value.size(); ++i) {
        weight.value[i] = stddev * rng.next_normal();
    }
    bias.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
    const std::size_t rows = rows_for_width(x, d_in_, "Linear::forward");
    cache_x_ = x;
    has_cache_ = true;

    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = d_out_;
    Tensor out(out_shape);
    const double* px = x.data();
    const double* pw = weight.value.data();
    const double* pb = bias.value.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = po + r * d_out_;
        for (std::size_t j = 0; j < d_out_; ++j) orow[j] = pb[j];
        const double* xrow = px + r * d_in_;
        for (std::size_t i = 0; i < d_in_; ++i) {
            const double xi = xrow[i];
            const double* wrow = pw + i * d_out_;
            for (std::size_t j = 0; j < d_out_; ++j) orow[j] += xi * wrow[j];
        }
    }
    return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "Linear");
    const std::size_t rows = rows_for_width(grad_out, d_out_, "Linear::backward");
    if (rows != cache_x_.size() / d_in_) {
        throw std::invalid_argument("Linear::backward: grad shape " + grad_out.shape_str() +
                                    " does not match cached input " + cache_x_.shape_str());
    }
    const double* px = cache_x_.data();
    const double* pg = grad_out.data();
    const double* pw = weight.value.data();
    double* pgw = weight.grad.data();
    double* pgb = bias.grad.data();

    Tensor grad_in(cache_x_.shape());
    double* pgi = grad_in.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = px + r * d_in_;
        const double* grow = pg + r * d_out_;
        double* girow = pgi + r * d_in_;
        for (std::size_t j = 0; j < d_out_; ++j) pgb[j] += grow[j];
        for (std::size_t i = 0; i < d_in_; ++i) {
            const double xi = xrow[i];
            const double* wrow = pw + i * d_out_;
            double* gwrow = pgw + i * d_out_;
            double acc = 0.0;
            for (std::size_t j = 0; j < d_out_; ++j) {
                gwrow[j] += xi * grow[j];
                acc += grow[j] * wrow[j];
            }
            girow[i] = acc;
        }
    }
    return grad_in;
}

void Linear::collect_params(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------------------
// EmbeddingTable
// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim)
    : table({rows, dim}), rows_(rows), dim_(dim) {}

void EmbeddingTable::init(Rng& rng, double stddev) {
    for (std::size_t i = 0; i < table.value.size(); ++i) {
        table.value[i] = stddev * rng.next_normal();
    }
}

Tensor EmbeddingTable::forward(const std::vector<int>& ids) {
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows_) {
            throw std::invalid_argument("EmbeddingTable: id " + std::to_string(id) +
                                        " out of range [0, " + std::to_string(rows_) + ")");
        }
    }
    cache_ids_ = ids;
    has_cache_ = true;
    Tensor out({ids.size(), dim_});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const double* src = table.value.data() + static_cast<std::size_t>(ids[r]) * dim_;
        std::copy_n(src, dim_, out.data() + r * dim_);
    }
    return out;
}

void EmbeddingTable::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "EmbeddingTable");
    if (grad_out.rank() != 2 || grad_out.extent(0) != cache_ids_.size() ||
        grad_out.extent(1) != dim_) {
        throw std::invalid_argument("EmbeddingTable::backward: grad shape " +
                                    grad_out.shape_str() + " does not match lookup of " +
                                    std::to_string(cache_ids_.size()) + " rows");
    }
    for (std::size_t r = 0; r < cache_ids_.size(); ++r) {
        double* dst = table.grad.data() + static_cast<std::size_t>(cache_ids_[r]) * dim_;
        const double* src = grad_out.data() + r * dim_;
        for (std::size_t j = 0; j < dim_; ++j) dst[j] += src[j];
    }
}

void EmbeddingTable::collect_params(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix, &table);
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(std::size_t dim, double epsilon)
    : gain({dim}), bias({dim}), dim_(dim), epsilon_(epsilon) {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("LayerNorm: epsilon must be > 0");
    }
    gain.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
    const std::size_t rows = rows_for_width(x, dim_, "LayerNorm::forward");
    cache_xhat_ = Tensor(x.shape());
    cache_inv_std_.assign(rows, 0.0);
    has_cache_ = true;

    Tensor out(x.shape());
    const double* px = x.data();
    double* pxh = cache_xhat_.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = px + r * dim_;
        double mu = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) mu += xrow[j];
        mu /= static_cast<double>(dim_);
        double var = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double c = xrow[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(dim_);
        const double inv_std = 1.0 / std::sqrt(var + epsilon_);
        cache_inv_std_[r] = inv_std;
        double* xhrow = pxh + r * dim_;
        double* orow = po + r * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            xhrow[j] = (xrow[j] - mu) * inv_std;
            orow[j] = gain.value[j] * xhrow[j] + bias.value[j];
        }
    }
    return out;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "LayerNorm");
    if (!grad_out.same_shape(cache_xhat_)) {
        throw std::invalid_argument("LayerNorm::backward: grad shape " + grad_out.shape_str() +
                                    " does not match cached input " + cache_xhat_.shape_str());
    }
    const std::size_t rows = grad_out.size() / dim_;
    Tensor grad_in(grad_out.shape());
    const double* pg = grad_out.data();
    const double* pxh = cache_xhat_.data();
    double* pgi = grad_in.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = pg + r * dim_;
        const double* xhrow = pxh + r * dim_;
        double mean_gxh = 0.0, mean_gxh_xh = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double gxh = grow[j] * gain.value[j];
            mean_gxh += gxh;
            mean_gxh_xh += gxh * xhrow[j];
            gain.grad[j] += grow[j] * xhrow[j];
            bias.grad[j] += grow[j];
        }
        mean_gxh /= static_cast<double>(dim_);
        mean_gxh_xh /= static_cast<double>(dim_);
        double* girow = pgi + r * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double gxh = grow[j] * gain.value[j];
            girow[j] = cache_inv_std_[r] * (gxh - mean_gxh - xhrow[j] * mean_gxh_xh);
        }
    }
    return grad_in;
}

void LayerNorm::collect_params(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
}

// ---------------------------------------------------------------------------
// MultiHeadSelfAttention
// ---------------------------------------------------------------------------

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t d_model, std::size_t heads)
    : wq({d_model, d_model}),
      wk({d_model, d_model}),
      wv({d_model, d_model}),
      wo({d_model, d_model}),
      d_model_(d_model),
      heads_(heads),
      head_dim_(heads == 0 ? 0 : d_model / heads) {
    if (heads == 0 || d_model % heads != 0) {
        throw std::invalid_argument("MultiHeadSelfAttention: d_model " +
                                    std::to_string(d_model) + " not divisible by heads " +
                                    std::to_string(heads));
    }
}

void MultiHeadSelfAttention::init(Rng& rng, double stddev) {
    for (Param* w : {&wq, &wk, &wv, &wo}) {
        for (std::size_t i = 0; i < w->value.size(); ++i) {
            w->value[i] = stddev * rng.next_normal();
        }
    }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, const std::vector<bool>& key_mask) {
    if (x.rank() != 2 || x.extent(1) != d_model_) {
        throw std::invalid_argument("MultiHeadSelfAttention::forward: expected [seq x " +
                                    std::to_string(d_model_) + "], got " + x.shape_str());
    }
    const std::size_t seq = x.extent(0);
    if (!key_mask.empty() && key_mask.size() != seq) {
        throw std::invalid_argument("MultiHeadSelfAttention::forward: mask length " +
                                    std::to_string(key_mask.size()) +
                                    " does not match sequence length " + std::to_string(seq));
    }

    cache_x_ = x;
    cache_q_ = matmul(x, wq.value);
    cache_k_ = matmul(x, wk.value);
    cache_v_ = matmul(x, wv.value);
    cache_attn_.assign(heads_, Tensor());
    cache_ctx_ = Tensor({seq, d_model_});

    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::size_t c0 = h * head_dim_;
        Tensor scores({seq, seq});
        for (std::size_t i = 0; i < seq; ++i) {
            const double* qrow = cache_q_.data() + i * d_model_ + c0;
            for (std::size_t j = 0; j < seq; ++j) {
                const double* krow = cache_k_.data() + j * d_model_ + c0;
                double dot = 0.0;
                for (std::size_t c = 0; c < head_dim_; ++c) dot += qrow[c] * krow[c];
                double s = dot * scale;
                if (!key_mask.empty() && key_mask[j]) s += kMaskScore;
                scores[i * seq + j] = s;
            }
        }
        cache_attn_[h] = softmax_rows(scores);
        const Tensor& attn = cache_attn_[h];
        for (std::size_t i = 0; i < seq; ++i) {
            double* crow = cache_ctx_.data() + i * d_model_ + c0;
            for (std::size_t j = 0; j < seq; ++j) {
                const double a = attn[i * seq + j];
                if (a == 0.0) continue;
                const double* vrow = cache_v_.data() + j * d_model_ + c0;
                for (std::size_t c = 0; c < head_dim_; ++c) crow[c] += a * vrow[c];
            }
        }
    }
    has_cache_ = true;
    return matmul(cache_ctx_, wo.value);
}

Tensor MultiHeadSelfAttention::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "MultiHeadSelfAttention");
    if (!grad_out.same_shape(cache_x_)) {
        throw std::invalid_argument("MultiHeadSelfAttention::backward: grad shape " +
                                    grad_out.shape_str() + " does not match input " +
                                    cache_x_.shape_str());
    }
    const std::size_t seq = cache_x_.extent(0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

    // out = ctx * Wo
    Tensor ctx_t = transpose(cache_ctx_);
    Tensor gwo = matmul(ctx_t, grad_out);
    for (std::size_t i = 0; i < gwo.size(); ++i) wo.grad[i] += gwo[i];
    Tensor g_ctx = matmul(grad_out, transpose(wo.value));

    Tensor g_q({seq, d_model_}), g_k({seq, d_model_}), g_v({seq, d_model_});
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::size_t c0 = h * head_dim_;
        const Tensor& attn = cache_attn_[h];

        // scores gradient via softmax rows
        Tensor g_scores({seq, seq});
        for (std::size_t i = 0; i < seq; ++i) {
            const double* gcrow = g_ctx.data() + i * d_model_ + c0;
            double row_dot = 0.0;
            for (std::size_t j = 0; j < seq; ++j) {
                const double* vrow = cache_v_.data() + j * d_model_ + c0;
                double ga = 0.0;
                for (std::size_t c = 0; c < head_dim_; ++c) ga += gcrow[c] * vrow[c];
                g_scores[i * seq + j] = ga;  // temporarily dL/d attn
                row_dot += attn[i * seq + j] * ga;
            }
            for (std::size_t j = 0; j < seq; ++j) {
                const double a = attn[i * seq + j];
                g_scores[i * seq + j] = a * (g_scores[i * seq + j] - row_dot);
            }
            // accumulate dL/d v while attn weights are at hand
            for (std::size_t j = 0; j < seq; ++j) {
                const double a = attn[i * seq + j];
                if (a == 0.0) continue;
                double* gvrow = g_v.data() + j * d_model_ + c0;
                for (std::size_t c = 0; c < head_dim_; ++c) gvrow[c] += a * gcrow[c];
            }
        }

        for (std::size_t i = 0; i < seq; ++i) {
            double* gqrow = g_q.data() + i * d_model_ + c0;
            for (std::size_t j = 0; j < seq; ++j) {
                const double gs = g_scores[i * seq + j] * scale;
                if (gs == 0.0) continue;
                const double* krow = cache_k_.data() + j * d_model_ + c0;
                double* gkrow = g_k.data() + j * d_model_ + c0;
                const double* qrow = cache_q_.data() + i * d_model_ + c0;
                for (std::size_t c = 0; c < head_dim_; ++c) {
                    gqrow[c] += gs * krow[c];
                    gkrow[c] += gs * qrow[c];
                }
            }
        }
    }

    Tensor x_t = transpose(cache_x_);
    Tensor gwq = matmul(x_t, g_q);
    Tensor gwk = matmul(x_t, g_k);
    Tensor gwv = matmul(x_t, g_v);
    for (std::size_t i = 0; i < gwq.size(); ++i) {
        wq.grad[i] += gwq[i];
        wk.grad[i] += gwk[i];
        wv.grad[i] += gwv[i];
    }

    Tensor grad_in = matmul(g_q, transpose(wq.value));
    Tensor gk_in = matmul(g_k, transpose(wk.value));
    Tensor gv_in = matmul(g_v, transpose(wv.value));
    for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] += gk_in[i] + gv_in[i];
    return grad_in;
}

void MultiHeadSelfAttention::collect_params(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + ".wq", &wq);
    out.emplace_back(prefix + ".wk", &wk);
    out.emplace_back(prefix + ".wv", &wv);
    out.emplace_back(prefix + ".wo", &wo);
}

// ---------------------------------------------------------------------------
// FeedForward
// ---------------------------------------------------------------------------

FeedForward::FeedForward(std::size_t d_in, std::size_t hidden, std::size_t d_out)
    : fc1(d_in, hidden), fc2(hidden, d_out) {}

void FeedForward::init(Rng& rng, double stddev) {
    fc1.init(rng, stddev);
    fc2.init(rng, stddev);
}

Tensor FeedForward::forward(const Tensor& x) {
    cache_pre_act_ = fc1.forward(x);
    has_cache_ = true;
    Tensor act = cache_pre_act_;
    for (std::size_t i = 0; i < act.size(); ++i) act[i] = gelu(act[i]);
    return fc2.forward(act);
}

Tensor FeedForward::backward(const Tensor& grad_out) {
    require_cache(has_cache_, "FeedForward");
    Tensor g_act = fc2.backward(grad_out);
    for (std::size_t i = 0; i < g_act.size(); ++i) g_act[i] *= gelu_grad(cache_pre_act_[i]);
    return fc1.backward(g_act);
}

void FeedForward::collect_params(const std::string& prefix, ParamRefs& out) {
    fc1.collect_params(prefix + ".fc1", out);
    fc2.collect_params(prefix + ".fc2", out);
}

// ---------------------------------------------------------------------------
// TransformerBlock
// ---------------------------------------------------------------------------

TransformerBlock::TransformerBlock(std::size_t d_model, std::size_t heads,
                                   std::size_t ffn_hidden)
    : ln1(d_model), ln2(d_model), attn(d_model, heads), ffn(d_model, ffn_hidden, d_model) {}

void TransformerBlock::init(Rng& rng, double stddev) {
    attn.init(rng, stddev);
    ffn.init(rng, stddev);
}

Tensor TransformerBlock::forward(const Tensor& x, const std::vector<bool>& key_mask) {
    Tensor h = add(x, attn.forward(ln1.forward(x), key_mask));
    return add(h, ffn.forward(ln2.forward(h)));
}

Tensor TransformerBlock::backward(const Tensor& grad_out) {
    Tensor g_h = add(grad_out, ln2.backward(ffn.backward(grad_out)));
    return add(g_h, ln1.backward(attn.backward(g_h)));
}

void TransformerBlock::collect_params(const std::string& prefix, ParamRefs& out) {
    ln1.collect_params(prefix + ".ln1", out);
    attn.collect_params(prefix + ".attn", out);
    ln2.collect_params(prefix + ".ln2", out);
    ffn.collect_params(prefix + ".ffn", out);
}

// ---------------------------------------------------------------------------
// Cross entropy
// ---------------------------------------------------------------------------

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: expected [batch x classes], got " +
                                    logits.shape_str());
    }
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    if (labels.size() != batch) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(batch));
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                        " out of range [0, " + std::to_string(classes) + ")");
        }
    }

    Tensor probs = softmax_rows(logits);
    double loss = 0.0;
    Tensor grad = probs;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const std::size_t y = static_cast<std::size_t>(labels[r]);
        loss -= std::log(probs[r * classes + y]);
        grad[r * classes + y] -= 1.0;
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= inv_batch;
    return {loss * inv_batch, std::move(grad)};
}

}  // namespace mmfuse
