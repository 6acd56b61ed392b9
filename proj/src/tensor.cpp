#include "p3d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace p3d {

namespace {

int64_t checked_element_count(const std::vector<int64_t>& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor shape must have at least one axis");
    }
    int64_t n = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] < 1) {
            throw DimensionError("tensor extent must be positive, got " +
                                 std::to_string(shape[i]) + " on axis " + std::to_string(i));
        }
        n *= shape[i];
    }
    return n;
}

} // namespace

std::string dtype_name(Dtype d) {
    return d == Dtype::F32 ? "f32" : "f64";
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::F32;
    if (name == "f64") return Dtype::F64;
    throw DataError("unknown dtype '" + name + "' (expected f32 or f64)");
}

Tensor::Tensor(std::vector<int64_t> shape, double fill, Dtype dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
    data_.assign(static_cast<size_t>(checked_element_count(shape_)), fill);
}

Tensor::Tensor(std::initializer_list<int64_t> shape, double fill, Dtype dtype)
    : Tensor(std::vector<int64_t>(shape), fill, dtype) {}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> data, Dtype dtype) {
    const int64_t n = checked_element_count(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    t.dtype_ = dtype;
    return t;
}

Tensor Tensor::reshape(std::vector<int64_t> new_shape) const {
    const int64_t n = checked_element_count(new_shape);
    if (n != size()) {
        throw DimensionError("reshape from " + shape_str(shape_) + " to " +
                             shape_str(new_shape) + " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    t.dtype_ = dtype_;
    return t;
}

std::string shape_str(std::span<const int64_t> shape) {
    std::ostringstream os;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) {
        throw DimensionError("max_abs_diff: shapes differ (" + shape_str(a) + " vs " +
                             shape_str(b) + ")");
    }
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

double min_value(const Tensor& t) {
    return *std::min_element(t.values().begin(), t.values().end());
}

double max_value(const Tensor& t) {
    return *std::max_element(t.values().begin(), t.values().end());
}

double mean_value(const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) s += t[i];
    return s / static_cast<double>(t.size());
}

bool all_finite(const Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) return false;
    }
    return true;
}

namespace {

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, double (*op)(double, double)) {
    if (!same_shape(a, b)) {
        throw DimensionError(std::string(name) + ": shapes differ (" + shape_str(a) + " vs " +
                             shape_str(b) + ")");
    }
    Tensor out(a.shape(), 0.0, a.dtype());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "subtract", [](double x, double y) { return x - y; });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "multiply", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out(a.shape(), 0.0, a.dtype());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: expected rank-2 operands, got " + shape_str(a) + " and " +
                             shape_str(b));
    }
    if (a.extent(1) != b.extent(0)) {
        throw DimensionError("matmul: inner extents differ (a: " + shape_str(a) +
                             ", b: " + shape_str(b) + ")");
    }
    const int64_t m = a.extent(0);
    const int64_t kk = a.extent(1);
    const int64_t n = b.extent(1);
    Tensor out({m, n}, 0.0, a.dtype());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    // i-k-j loop: each out[i][j] accumulates contributions in ascending k.
    for (int64_t i = 0; i < m; ++i) {
        double* orow = po + i * n;
        const double* arow = pa + i * kk;
        for (int64_t k = 0; k < kk; ++k) {
            const double aik = arow[k];
            const double* brow = pb + k * n;
            for (int64_t j = 0; j < n; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) {
        throw DimensionError("transpose: expected rank-2 tensor, got " + shape_str(m));
    }
    const int64_t r = m.extent(0);
    const int64_t c = m.extent(1);
    Tensor out({c, r}, 0.0, m.dtype());
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            out[j * r + i] = m[i * c + j];
        }
    }
    return out;
}

namespace {

// Corner-aligned source coordinate for output index i: endpoints map to
// endpoints; a target axis of extent 1 samples source coordinate 0.
inline double grid_coord(int64_t i, int64_t in_extent, int64_t out_extent) {
    if (out_extent == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in_extent - 1) /
           static_cast<double>(out_extent - 1);
}

struct AxisSample {
    int64_t lo;
    int64_t hi;
    double frac;
};

inline AxisSample axis_sample(int64_t i, int64_t in_extent, int64_t out_extent) {
    const double c = grid_coord(i, in_extent, out_extent);
    int64_t lo = static_cast<int64_t>(c);
    if (lo > in_extent - 1) lo = in_extent - 1;
    const int64_t hi = std::min<int64_t>(lo + 1, in_extent - 1);
    return {lo, hi, c - static_cast<double>(lo)};
}

} // namespace

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 2) {
        throw DimensionError("resize_bilinear: expected H x W image, got " + shape_str(img));
    }
    if (out_h < 1 || out_w < 1) {
        throw DimensionError("resize_bilinear: target extents must be positive, got " +
                             std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    const int64_t h = img.extent(0);
    const int64_t w = img.extent(1);
    Tensor out({out_h, out_w}, 0.0, img.dtype());
    for (int64_t i = 0; i < out_h; ++i) {
        const AxisSample ys = axis_sample(i, h, out_h);
        for (int64_t j = 0; j < out_w; ++j) {
            const AxisSample xs = axis_sample(j, w, out_w);
            const double top = std::lerp(img.at(ys.lo, xs.lo), img.at(ys.lo, xs.hi), xs.frac);
            const double bot = std::lerp(img.at(ys.hi, xs.lo), img.at(ys.hi, xs.hi), xs.frac);
            out.at(i, j) = std::lerp(top, bot, ys.frac);
        }
    }
    return out;
}

Tensor resize_trilinear(const Tensor& v, int64_t out_h, int64_t out_w, int64_t out_d) {
    if (v.rank() != 3) {
        throw DimensionError("resize_trilinear: expected H x W x D volume, got " + shape_str(v));
    }
    if (out_h < 1 || out_w < 1 || out_d < 1) {
        throw DimensionError("resize_trilinear: target extents must be positive, got " +
                             std::to_string(out_h) + "x" + std::to_string(out_w) + "x" +
                             std::to_string(out_d));
    }
    const int64_t h = v.extent(0);
    const int64_t w = v.extent(1);
    const int64_t d = v.extent(2);
    Tensor out({out_h, out_w, out_d}, 0.0, v.dtype());
    for (int64_t i = 0; i < out_h; ++i) {
        const AxisSample ys = axis_sample(i, h, out_h);
        for (int64_t j = 0; j < out_w; ++j) {
            const AxisSample xs = axis_sample(j, w, out_w);
            for (int64_t l = 0; l < out_d; ++l) {
                const AxisSample zs = axis_sample(l, d, out_d);
                const double c00 =
                    std::lerp(v.at(ys.lo, xs.lo, zs.lo), v.at(ys.lo, xs.lo, zs.hi), zs.frac);
                const double c01 =
                    std::lerp(v.at(ys.lo, xs.hi, zs.lo), v.at(ys.lo, xs.hi, zs.hi), zs.frac);
                const double c10 =
                    std::lerp(v.at(ys.hi, xs.lo, zs.lo), v.at(ys.hi, xs.lo, zs.hi), zs.frac);
                const double c11 =
                    std::lerp(v.at(ys.hi, xs.hi, zs.lo), v.at(ys.hi, xs.hi, zs.hi), zs.frac);
                const double c0 = std::lerp(c00, c01, xs.frac);
                const double c1 = std::lerp(c10, c11, xs.frac);
                out.at(i, j, l) = std::lerp(c0, c1, ys.frac);
            }
        }
    }
    return out;
}

Tensor crop(const Tensor& t, std::span<const int64_t> origin, std::span<const int64_t> extent) {
    const int64_t r = t.rank();
    if (static_cast<int64_t>(origin.size()) != r || static_cast<int64_t>(extent.size()) != r) {
        throw DimensionError("crop: origin/extent rank does not match tensor rank " +
                             std::to_string(r));
    }
    for (int64_t ax = 0; ax < r; ++ax) {
        if (extent[ax] < 1) {
            throw RangeError("crop: axis " + std::to_string(ax) + ": extent " +
                             std::to_string(extent[ax]) + " must be positive");
        }
        if (origin[ax] < 0 || origin[ax] + extent[ax] > t.extent(ax)) {
            throw RangeError("crop: axis " + std::to_string(ax) + ": origin " +
                             std::to_string(origin[ax]) + " + extent " +
                             std::to_string(extent[ax]) + " exceeds " +
                             std::to_string(t.extent(ax)));
        }
    }

    Tensor out(std::vector<int64_t>(extent.begin(), extent.end()), 0.0, t.dtype());

    // Row-major odometer over all output axes except the innermost; the
    // innermost axis is a contiguous run.
    std::vector<int64_t> in_stride(static_cast<size_t>(r), 1);
    for (int64_t ax = r - 2; ax >= 0; --ax) {
        in_stride[ax] = in_stride[ax + 1] * t.extent(ax + 1);
    }
    const int64_t run = extent[r - 1];
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    double* dst = out.data();
    const double* src = t.data();
    const int64_t rows = out.size() / run;
    for (int64_t row = 0; row < rows; ++row) {
        int64_t base = 0;
        for (int64_t ax = 0; ax < r; ++ax) {
            base += (origin[ax] + idx[ax]) * in_stride[ax];
        }
        std::memcpy(dst, src + base, static_cast<size_t>(run) * sizeof(double));
        dst += run;
        for (int64_t ax = r - 2; ax >= 0; --ax) {
            if (++idx[ax] < extent[ax]) break;
            idx[ax] = 0;
        }
    }
    return out;
}

Tensor crop(const Tensor& t, std::initializer_list<int64_t> origin,
            std::initializer_list<int64_t> extent) {
    return crop(t, std::span<const int64_t>(origin.begin(), origin.size()),
                std::span<const int64_t>(extent.begin(), extent.size()));
}

Tensor pad_replicate(const Tensor& t, std::span<const int64_t> target) {
    const int64_t r = t.rank();
    if (static_cast<int64_t>(target.size()) != r) {
        throw DimensionError("pad_replicate: target rank does not match tensor rank " +
                             std::to_string(r));
    }
    std::vector<int64_t> out_shape(target.begin(), target.end());
    std::vector<int64_t> lead(static_cast<size_t>(r), 0);
    for (int64_t ax = 0; ax < r; ++ax) {
        if (target[ax] < t.extent(ax)) {
            throw DimensionError("pad_replicate: target extent " + std::to_string(target[ax]) +
                                 " smaller than input " + std::to_string(t.extent(ax)) +
                                 " on axis " + std::to_string(ax));
        }
        lead[ax] = (target[ax] - t.extent(ax)) / 2;
    }
    Tensor out(out_shape, 0.0, t.dtype());
    std::vector<int64_t> in_stride(static_cast<size_t>(r), 1);
    for (int64_t ax = r - 2; ax >= 0; --ax) {
        in_stride[ax] = in_stride[ax + 1] * t.extent(ax + 1);
    }
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    for (int64_t o = 0; o < out.size(); ++o) {
        int64_t src = 0;
        for (int64_t ax = 0; ax < r; ++ax) {
            int64_t p = idx[ax] - lead[ax];
            p = std::clamp<int64_t>(p, 0, t.extent(ax) - 1);
            src += p * in_stride[ax];
        }
        out[o] = t.data()[src];
        for (int64_t ax = r - 1; ax >= 0; --ax) {
            if (++idx[ax] < out_shape[ax]) break;
            idx[ax] = 0;
        }
    }
    return out;
}

} // namespace p3d
