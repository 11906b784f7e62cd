#include "mmfuse/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace mmfuse {

const std::vector<FusionKind>& all_fusion_kinds() {
    static const std::vector<FusionKind> kinds = {
        FusionKind::TextOnly, FusionKind::ImageOnly, FusionKind::Concat,
        FusionKind::DotProduct, FusionKind::TensorProduct};
    return kinds;
}

std::string fusion_name(FusionKind kind) {
    switch (kind) {
        case FusionKind::TextOnly: return "text-only";
        case FusionKind::ImageOnly: return "image-only";
        case FusionKind::Concat: return "concat";
        case FusionKind::DotProduct: return "dot-product";
        case FusionKind::TensorProduct: return "tensor-product";
    }
    throw std::invalid_argument("fusion_name: invalid FusionKind");
}

FusionKind fusion_from_name(const std::string& name) {
    for (FusionKind kind : all_fusion_kinds()) {
        if (fusion_name(kind) == name) return kind;
    }
    throw std::invalid_argument("unknown fusion kind '" + name +
                                "' (expected text-only, image-only, concat, "
                                "dot-product, or tensor-product)");
}

std::size_t fused_dim(FusionKind kind, std::size_t d) {
    switch (kind) {
        case FusionKind::TextOnly:
        case FusionKind::ImageOnly:
        case FusionKind::DotProduct: return d;
        case FusionKind::Concat: return 2 * d;
        case FusionKind::TensorProduct: return (d + 1) * (d + 1);
    }
    throw std::invalid_argument("fused_dim: invalid FusionKind");
}

namespace {

double vector_norm(const Tensor& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i];
    return std::sqrt(acc);
}

}  // namespace

Tensor FusionOp::forward(const Tensor& t, const Tensor& v) {
    if (t.rank() != 1 || v.rank() != 1 || t.size() != v.size()) {
        throw std::invalid_argument("FusionOp: expected two vectors of equal length, got " +
                                    t.shape_str() + " and " + v.shape_str());
    }
    if (!all_finite(t) || !all_finite(v)) {
        throw std::invalid_argument("FusionOp: inputs contain non-finite values");
    }
    t_ = t;
    v_ = v;
    has_cache_ = true;

    const std::size_t d = t.size();
    switch (kind_) {
        case FusionKind::TextOnly: return t;
        case FusionKind::ImageOnly: return v;
        case FusionKind::Concat: return concat(t, v, 0);
        case FusionKind::DotProduct: {
            norm_t_ = vector_norm(t);
            norm_v_ = vector_norm(v);
            if (norm_t_ == 0.0 || norm_v_ == 0.0) {
                throw std::invalid_argument("FusionOp: dot-product fusion requires "
                                            "nonzero-norm inputs");
            }
            Tensor out({d});
            const double inv = 1.0 / (norm_t_ * norm_v_);
            for (std::size_t i = 0; i < d; ++i) out[i] = t[i] * v[i] * inv;
            return out;
        }
        case FusionKind::TensorProduct: {
            Tensor out({(d + 1) * (d + 1)});
            for (std::size_t i = 0; i <= d; ++i) {
                const double ti = i < d ? t[i] : 1.0;
                for (std::size_t j = 0; j <= d; ++j) {
                    out[i * (d + 1) + j] = ti * (j < d ? v[j] : 1.0);
                }
            }
            return out;
        }
    }
    throw std::invalid_argument("FusionOp: invalid FusionKind");
}

std::pair<Tensor, Tensor> FusionOp::backward(const Tensor& grad_out) {
    if (!has_cache_) {
        throw std::logic_error("FusionOp: backward called before forward");
    }
    const std::size_t d = t_.size();
    if (grad_out.rank() != 1 || grad_out.size() != fused_dim(kind_, d)) {
        throw std::invalid_argument("FusionOp: gradient shape " + grad_out.shape_str() +
                                    " does not match fused length " +
                                    std::to_string(fused_dim(kind_, d)));
    }

    Tensor grad_t({d}), grad_v({d});
    switch (kind_) {
        case FusionKind::TextOnly:
            grad_t = grad_out;
            break;
        case FusionKind::ImageOnly:
            grad_v = grad_out;
            break;
        case FusionKind::Concat:
            for (std::size_t i = 0; i < d; ++i) {
                grad_t[i] = grad_out[i];
                grad_v[i] = grad_out[d + i];
            }
            break;
        case FusionKind::DotProduct: {
            // out_i = u_i w_i for unit vectors u = t/|t|, w = v/|v|; the norm
            // makes each gradient a projection off its own unit vector:
            // grad_t = (g . w - <g . w, u> u) / |t|, symmetrically for v.
            double guw = 0.0;  // <g . u . w, 1> = <g . w, u> = <g . u, w>
            for (std::size_t i = 0; i < d; ++i) {
                guw += grad_out[i] * (t_[i] / norm_t_) * (v_[i] / norm_v_);
            }
            for (std::size_t i = 0; i < d; ++i) {
                const double ui = t_[i] / norm_t_;
                const double wi = v_[i] / norm_v_;
                grad_t[i] = (grad_out[i] * wi - guw * ui) / norm_t_;
                grad_v[i] = (grad_out[i] * ui - guw * wi) / norm_v_;
            }
            break;
        }
        case FusionKind::TensorProduct:
            // grad over the (d+1)x(d+1) matrix G: grad_t'_i = sum_j G_ij v'_j,
            // grad_v'_j = sum_i G_ij t'_i; the augmented coordinate is dropped.
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j <= d; ++j) {
                    acc += grad_out[i * (d + 1) + j] * (j < d ? v_[j] : 1.0);
                }
                grad_t[i] = acc;
            }
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i <= d; ++i) {
                    acc += grad_out[i * (d + 1) + j] * (i < d ? t_[i] : 1.0);
                }
                grad_v[j] = acc;
            }
            break;
    }
    return {std::move(grad_t), std::move(grad_v)};
}

}  // namespace mmfuse
