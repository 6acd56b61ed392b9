#ifndef P3D_TENSOR_HPP
#define P3D_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "p3d/errors.hpp"

namespace p3d {

/// Storage width used when a tensor is written to disk. Computation is
/// always carried out in 64-bit floats; F32 marks tensors that serialize
/// as 32-bit (bulk pipeline outputs).
enum class Dtype { F32, F64 };

std::string dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& name);

/// Dense n-dimensional array of doubles in row-major order.
///
/// Axis order is semantic and declared per use: 2D images are H x W,
/// 3D volumes are H x W x D, matrices are rows x cols. Every extent is
/// positive and product(shape) == data().size() at all times.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape, double fill = 0.0, Dtype dtype = Dtype::F64);
    Tensor(std::initializer_list<int64_t> shape, double fill = 0.0, Dtype dtype = Dtype::F64);

    static Tensor from_data(std::vector<int64_t> shape, std::vector<double> data,
                            Dtype dtype = Dtype::F64);

    const std::vector<int64_t>& shape() const noexcept { return shape_; }
    int64_t rank() const noexcept { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_.at(static_cast<size_t>(axis)); }
    int64_t size() const noexcept { return static_cast<int64_t>(data_.size()); }
    bool empty() const noexcept { return data_.empty(); }

    Dtype dtype() const noexcept { return dtype_; }
    void set_dtype(Dtype d) noexcept { dtype_ = d; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

    // Row-major offsets for the common ranks; callers keep hot loops on raw
    // pointers. Bounds are the caller's responsibility.
    int64_t offset(int64_t i, int64_t j) const noexcept { return i * shape_[1] + j; }
    int64_t offset(int64_t i, int64_t j, int64_t k) const noexcept {
        return (i * shape_[1] + j) * shape_[2] + k;
    }
    int64_t offset(int64_t i, int64_t j, int64_t k, int64_t l) const noexcept {
        return ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
    }

    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(offset(i, j))]; }
    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(offset(i, j))]; }
    double at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>(offset(i, j, k))];
    }
    double& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>(offset(i, j, k))];
    }
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(offset(i, j, k, l))];
    }
    double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(offset(i, j, k, l))];
    }

    /// Same data, new shape; element count must be preserved.
    Tensor reshape(std::vector<int64_t> new_shape) const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
    Dtype dtype_ = Dtype::F64;
};

std::string shape_str(std::span<const int64_t> shape);
inline std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

bool same_shape(const Tensor& a, const Tensor& b);

/// Bitwise equality of shape and every scalar (no tolerance).
bool bitwise_equal(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

double min_value(const Tensor& t);
double max_value(const Tensor& t);
double mean_value(const Tensor& t);
bool all_finite(const Tensor& t);

// Elementwise arithmetic over same-shape operands (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Matrix product of a (M x K) and b (K x N). Each output element is
/// accumulated over k = 0..K-1 in ascending order, so results are
/// bit-reproducible across runs and thread counts.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Transpose of a rank-2 tensor.
Tensor transpose(const Tensor& m);

/// Bilinear resample of an H x W image onto a corner-aligned target grid:
/// endpoints map to endpoints, axes of extent 1 sample at coordinate 0.
/// Constant inputs are preserved to the last bit.
Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);

/// Trilinear analogue of resize_bilinear for H x W x D volumes.
Tensor resize_trilinear(const Tensor& v, int64_t out_h, int64_t out_w, int64_t out_d);

/// Contiguous sub-block copy. origin and extent are per-axis;
/// origin + extent must stay within the shape on every axis.
Tensor crop(const Tensor& t, std::span<const int64_t> origin, std::span<const int64_t> extent);
Tensor crop(const Tensor& t, std::initializer_list<int64_t> origin,
            std::initializer_list<int64_t> extent);

/// Grow a tensor to target extents by replicating edge values. Used by the
/// 3D crop fallback for undersized volumes.
Tensor pad_replicate(const Tensor& t, std::span<const int64_t> target);

} // namespace p3d

#endif
