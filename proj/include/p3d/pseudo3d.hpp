#ifndef P3D_PSEUDO3D_HPP
#define P3D_PSEUDO3D_HPP

#include <array>

#include "p3d/tensor.hpp"

namespace p3d {

/// Sliding-window parameters for the 2D -> pseudo-3D conversion.
/// Defaults: 5 x 5 window, stride 1.
struct P3DConfig {
    int64_t window = 5; // k
    int64_t stride = 1; // s

    void validate() const;
};

/// Output extents of to_pseudo3d for an H x W image:
///   H_t = (H - k) / s + 1,  W_t = (W - k) / s + 1,  D_t = k * k.
/// Throws ConfigError on a non-divisible stride, DimensionError when the
/// window exceeds the image. There is no padding.
std::array<int64_t, 3> pseudo3d_shape(int64_t height, int64_t width, const P3DConfig& cfg);

/// Convert a 2D image into a pseudo-3D volume: the depth fiber at spatial
/// position (i, j) is the k x k window whose top-left corner sits at
/// (i*s, j*s), unrolled row-major along the depth axis. The result has
/// shape H_t x W_t x (k*k).
Tensor to_pseudo3d(const Tensor& img, const P3DConfig& cfg);

/// Per-channel transform of an H x W x C image; channel volumes are stacked
/// on a trailing axis, giving H_t x W_t x (k*k) x C.
Tensor to_pseudo3d_stack(const Tensor& img, const P3DConfig& cfg);

/// Inverse reconstruction: each output pixel is the mean over every copy of
/// that pixel across the fibers containing it. For a volume produced by
/// to_pseudo3d all copies are identical and the original image is
/// recovered exactly. With s > k, pixels covered by no window are 0.
Tensor from_pseudo3d(const Tensor& vol, const P3DConfig& cfg, int64_t height, int64_t width);

/// Diagnostic: the largest absolute deviation between copies of the same
/// source pixel. Zero exactly when the volume is a valid to_pseudo3d image
/// (equivalently vol == to_pseudo3d(from_pseudo3d(vol))).
double consistency_residual(const Tensor& vol, const P3DConfig& cfg);

/// to_pseudo3d followed by a trilinear resize to the model input shape.
Tensor pseudo3d_for_model(const Tensor& img, const P3DConfig& cfg,
                          const std::array<int64_t, 3>& target);

/// View the volume as a patch matrix with fibers as columns: element
/// (d, i*W_t + j) = vol(i, j, d). For a to_pseudo3d output this equals
/// im2col of the source image with C = 1, P = 0 and the same k, s bitwise.
Tensor fibers_as_columns(const Tensor& vol);

/// Largest extent E <= extent with (E - k) divisible by s; requires
/// extent >= k.
int64_t largest_compatible_extent(int64_t extent, const P3DConfig& cfg);

/// Center-crop an image (rank 2 or 3) to the largest window/stride
/// compatible spatial extents. Backs the CLI --auto-crop flag.
Tensor center_crop_compatible(const Tensor& img, const P3DConfig& cfg);

} // namespace p3d

#endif
