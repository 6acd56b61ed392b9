#ifndef P3D_AUGMENT_HPP
#define P3D_AUGMENT_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "p3d/rng.hpp"
#include "p3d/tensor.hpp"

namespace p3d {

// Two-stage corruption recipe for H x W x D volumes with intensities in
// [0, 1]. Global ops move voxels (flip, affine); local ops perturb values
// (noise, blur, swap, gamma). Every op draws from an explicit stream, so a
// recipe is a pure function of (input, spec, item_index).

struct FlipOp {
    std::array<double, 3> axis_probs{0.5, 0.5, 0.5};
};

struct AffineOp {
    std::array<double, 3> max_rotation_deg{10.0, 10.0, 10.0};
    double max_scale_dev = 0.1;
    double max_translation_frac = 0.1;
};

struct NoiseOp {
    double std = 0.05; // fraction of the [0, 1] intensity range
};

struct BlurOp {
    std::array<double, 2> sigma_range{0.5, 1.5}; // voxels
};

struct SwapOp {
    std::array<int64_t, 3> patch_extent{8, 8, 4};
    int64_t swap_count = 10;
};

struct GammaOp {
    std::array<double, 2> gamma_range{0.7, 1.4};
};

using GlobalOp = std::variant<FlipOp, AffineOp>;
using LocalOp = std::variant<NoiseOp, BlurOp, SwapOp, GammaOp>;

struct AugmentSpec {
    uint64_t seed = 0;
    std::vector<GlobalOp> global_ops;
    std::vector<LocalOp> local_ops;

    /// Structural invariants: probabilities in [0, 1], sigma > 0, gamma
    /// range inside [0.25, 4]. Patch-vs-volume extents are checked at apply
    /// time when the volume shape is known.
    void validate() const;

    std::string to_json_string() const;
    static AugmentSpec from_json_string(const std::string& text);
    static AugmentSpec load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Full default recipe: flip + affine, then noise, blur, swap, gamma.
    static AugmentSpec standard(uint64_t seed);
    /// Recipe whose every op is an exact identity (all magnitudes zero,
    /// probabilities zero, gamma pinned to 1).
    static AugmentSpec identity(uint64_t seed);
};

/// Flips then affine resampling, deterministic given (spec.seed, item_index).
/// Output shape equals input shape; an all-zero-magnitude recipe is an
/// exact identity.
Tensor augment_global(const Tensor& v, const AugmentSpec& spec, int64_t item_index);

/// Value corruptions in declaration order, clamped to [0, 1].
Tensor augment_local(const Tensor& v, const AugmentSpec& spec, int64_t item_index);

// Stream-explicit cores (the pipeline derives its own streams from the
// batch-plan seed, item index, and view index).
Tensor apply_global_ops(const Tensor& v, const AugmentSpec& spec, rng::Stream& stream);
Tensor apply_local_ops(const Tensor& v, const AugmentSpec& spec, rng::Stream& stream);

inline constexpr std::array<int64_t, 3> kModelInputShape{64, 64, 32};

inline const std::vector<std::array<int64_t, 3>>& default_crop_sizes() {
    static const std::vector<std::array<int64_t, 3>> sizes{
        {64, 64, 32}, {96, 96, 48}, {112, 112, 56}, {128, 128, 64}};
    return sizes;
}

/// Randomly crop a patch of a size drawn from `sizes`, then resize
/// trilinearly to 64 x 64 x 32. When the drawn size does not fit, the
/// largest listed size that fits is used; when none fits, the volume is
/// replicate-padded up to the smallest listed size, provided no axis needs
/// to grow beyond twice its extent (otherwise the volume is rejected as a
/// data error).
Tensor random_crop_3d(const Tensor& v, rng::Stream& stream,
                      const std::vector<std::array<int64_t, 3>>& sizes = default_crop_sizes(),
                      const std::array<int64_t, 3>& target = kModelInputShape);

/// Random area-fraction crop (default fraction range [0.6, 1.0], aspect
/// preserved) followed by a bilinear resize to 224 x 224. Images smaller
/// than 64 x 64 are rejected.
Tensor random_crop_resize_2d(const Tensor& img, rng::Stream& stream,
                             const std::array<double, 2>& area_fraction_range = {0.6, 1.0},
                             const std::array<int64_t, 2>& target = {224, 224});

} // namespace p3d

#endif
