#ifndef P3D_REFERENCE_HPP
#define P3D_REFERENCE_HPP

#include "p3d/im2col.hpp"
#include "p3d/tensor.hpp"

namespace p3d::ref {

// Plain nested-loop convolutions, kept free of any lowering machinery.
// The benchmark times them against the GEMM path and the verify suite
// uses them as built-in cross-checks.

/// Direct 2D convolution of H x W x C with M k x k x C kernels.
Tensor conv2d_direct(const Tensor& input, const Tensor& kernels, const ConvSpec& spec);

/// Direct 3D convolution of H x W x D x C with M k^3 x C kernels.
Tensor conv3d_direct(const Tensor& input, const Tensor& kernels, int64_t k, int64_t stride,
                     int64_t pad);

} // namespace p3d::ref

#endif
