#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmfuse/tensor.hpp"

namespace mmfuse {

// The five ablation configurations, in their fixed reporting order.
enum class FusionKind { TextOnly, ImageOnly, Concat, DotProduct, TensorProduct };

const std::vector<FusionKind>& all_fusion_kinds();
std::string fusion_name(FusionKind kind);                // "tensor-product" etc.
FusionKind fusion_from_name(const std::string& name);    // throws on unknown name

// Output width for modality vectors of length d: unimodal and dot-product
// keep d, concat doubles it, tensor product yields (d+1)^2.
std::size_t fused_dim(FusionKind kind, std::size_t d);

// Differentiable fusion of a text vector t and an image vector v, both
// length d:
//   TextOnly/ImageOnly  pass one input through;
//   Concat              [t; v];
//   DotProduct          elementwise product of the unit-normalized vectors
//                       (its coordinate sum is the cosine similarity);
//   TensorProduct       row-major flattening of [t; 1] (x) [v; 1], which
//                       carries every bimodal product plus copies of t
//                       (last column), v (last row), and the constant 1.
class FusionOp {
public:
    explicit FusionOp(FusionKind kind) : kind_(kind) {}

    Tensor forward(const Tensor& t, const Tensor& v);
    std::pair<Tensor, Tensor> backward(const Tensor& grad_out);  // (grad_t, grad_v)

    FusionKind kind() const { return kind_; }

private:
    FusionKind kind_;
    Tensor t_, v_;          // cached inputs
    double norm_t_ = 0.0;   // cached norms (DotProduct)
    double norm_v_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace mmfuse
