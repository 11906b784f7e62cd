#include "mmfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mmfuse {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw std::invalid_argument("tensor shape extents must be positive, got " +
                                        shape_str(shape));
        }
        n *= e;
    }
    return n;
}

void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(who) + ": expected a rank-2 tensor, got " +
                                    t.shape_str());
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch: " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != checked_product(shape_)) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + mmfuse::shape_str(shape_));
    }
}

Tensor Tensor::from_vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " +
                                    shape_str());
    }
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    require_rank2(*this, "Tensor::at");
    return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    require_rank2(*this, "Tensor::at");
    return data_[i * shape_[1] + j];
}

std::string Tensor::shape_str() const { return mmfuse::shape_str(shape_); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t flat_index(const std::vector<std::size_t>& shape,
                       const std::vector<std::size_t>& coords) {
    if (coords.size() != shape.size()) {
        throw std::invalid_argument("flat_index: coordinate rank " +
                                    std::to_string(coords.size()) + " does not match shape " +
                                    shape_str(shape));
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < shape.size(); ++axis) {
        if (coords[axis] >= shape[axis]) {
            throw std::invalid_argument("flat_index: coordinate out of bounds for " +
                                        shape_str(shape));
        }
        flat = flat * shape[axis] + coords[axis];
    }
    return flat;
}

std::vector<std::size_t> unflatten_index(const std::vector<std::size_t>& shape,
                                         std::size_t flat) {
    std::vector<std::size_t> coords(shape.size(), 0);
    for (std::size_t axis = shape.size(); axis-- > 0;) {
        coords[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    if (flat != 0) {
        throw std::invalid_argument("unflatten_index: flat index out of bounds for " +
                                    shape_str(shape));
    }
    return coords;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw std::invalid_argument("matmul: inner extents do not match: " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    Tensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* orow = po + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor outer(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) {
        throw std::invalid_argument("outer: expected two vectors, got " + a.shape_str() +
                                    " and " + b.shape_str());
    }
    const std::size_t p = a.size(), q = b.size();
    Tensor out({p, q});
    double* po = out.data();
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) po[i * q + j] = a[i] * b[j];
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
    return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    }
    return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    if (a.rank() != b.rank()) {
        throw std::invalid_argument("concat: rank mismatch: " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    if (axis >= a.rank()) {
        throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                    " out of range for " + a.shape_str());
    }
    for (std::size_t d = 0; d < a.rank(); ++d) {
        if (d != axis && a.shape()[d] != b.shape()[d]) {
            throw std::invalid_argument("concat: shapes differ off-axis: " + a.shape_str() +
                                        " vs " + b.shape_str());
        }
    }
    std::vector<std::size_t> out_shape = a.shape();
    out_shape[axis] += b.shape()[axis];
    Tensor out(out_shape);

    // outer = product of extents before axis, inner = product after
    std::size_t outer_n = 1, inner_n = 1;
    for (std::size_t d = 0; d < axis; ++d) outer_n *= a.shape()[d];
    for (std::size_t d = axis + 1; d < a.rank(); ++d) inner_n *= a.shape()[d];
    const std::size_t a_span = a.shape()[axis] * inner_n;
    const std::size_t b_span = b.shape()[axis] * inner_n;
    for (std::size_t o = 0; o < outer_n; ++o) {
        std::copy_n(a.data() + o * a_span, a_span, out.data() + o * (a_span + b_span));
        std::copy_n(b.data() + o * b_span, b_span, out.data() + o * (a_span + b_span) + a_span);
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    Tensor out(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
    if (out.size() != a.size()) {
        throw std::invalid_argument("reshape: element count mismatch: " + a.shape_str() +
                                    " -> " + out.shape_str());
    }
    return out;
}

double sum(const Tensor& a) {
    return std::accumulate(a.data(), a.data() + a.size(), 0.0);
}

double mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

double max_value(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("max_value: empty tensor");
    return *std::max_element(a.data(), a.data() + a.size());
}

Tensor softmax_rows(const Tensor& a) {
    if (a.rank() == 0) throw std::invalid_argument("softmax_rows: empty tensor");
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.size() / cols;
    Tensor out = a;
    double* p = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = p + r * cols;
        const double m = *std::max_element(row, row + cols);
        double denom = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - m);
            denom += row[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] /= denom;
    }
    return out;
}

bool all_finite(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) return false;
    }
    return true;
}

}  // namespace mmfuse
