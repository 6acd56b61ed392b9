#ifndef P3D_IM2COL_HPP
#define P3D_IM2COL_HPP

#include "p3d/tensor.hpp"

namespace p3d {

/// Convolution lowering parameters: square k x k kernels, C input channels,
/// M kernels, symmetric zero padding P, stride s.
struct ConvSpec {
    int64_t k = 3;
    int64_t channels = 1; // C
    int64_t kernels = 1;  // M
    int64_t pad = 0;      // P
    int64_t stride = 1;   // s

    void validate() const;
};

/// Output extent along one spatial axis: (extent + 2P - k) / s + 1.
/// Throws ConfigError when the stride does not divide (non-divisible
/// residues are never silently floored) and DimensionError when the
/// window exceeds the padded extent.
int64_t conv_output_extent(int64_t extent, int64_t k, int64_t pad, int64_t stride,
                           const char* axis_name);

/// Unroll every convolution window of an H x W x C input (rank-2 inputs are
/// treated as C = 1) into one column of a (k*k*C) x (H_o * W_o) matrix.
///
/// Windows are enumerated row-major over output positions; inside a column
/// elements follow (window-row, window-col, channel) row-major. Padding
/// contributes zeros. Output rows/cols:
///     rows = k * k * C
///     cols = ((H + 2P - k) / s + 1) * ((W + 2P - k) / s + 1)
Tensor im2col(const Tensor& input, const ConvSpec& spec);

/// Adjoint of im2col: every matrix element is accumulated back onto its
/// source position (zero-padding cells are dropped), so
/// <im2col(x), y> == <x, col2im(y)> holds exactly in exact arithmetic.
Tensor col2im(const Tensor& cols, int64_t height, int64_t width, const ConvSpec& spec);

/// GEMM-lowered 2D convolution: kernels (M x k x k x C) are unrolled to an
/// M x (k*k*C) matrix in the same (row, col, channel) order as im2col
/// columns, multiplied against the patch matrix, and reshaped to
/// H_o x W_o x M.
Tensor conv2d_gemm(const Tensor& input, const Tensor& kernels, const ConvSpec& spec);

} // namespace p3d

#endif
