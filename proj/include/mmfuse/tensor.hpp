#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mmfuse {

// Dense row-major tensor of 64-bit floats. The flat index of (i, j) in an
// m x n tensor is i * n + j; data length always equals the product of the
// shape extents.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);                       // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor from_vector(std::vector<double> values);                 // rank-1
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }
    double& at(std::size_t i, std::size_t j);                              // rank-2 only
    double at(std::size_t i, std::size_t j) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    void fill(double value);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Row-major flat index <-> coordinate conversion.
std::size_t flat_index(const std::vector<std::size_t>& shape,
                       const std::vector<std::size_t>& coords);
std::vector<std::size_t> unflatten_index(const std::vector<std::size_t>& shape,
                                         std::size_t flat);

// a[m x k] * b[k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// vectors a[p], b[q] -> [p x q] with result(i, j) = a[i] * b[j]
Tensor outer(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor transpose(const Tensor& a);                                         // rank-2
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

double sum(const Tensor& a);
double mean(const Tensor& a);
double max_value(const Tensor& a);

// Softmax along the last axis, stabilized by max subtraction; every row of
// the result sums to 1.
Tensor softmax_rows(const Tensor& a);

bool all_finite(const Tensor& a);

}  // namespace mmfuse
