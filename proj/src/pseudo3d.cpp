#include "p3d/pseudo3d.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace p3d {

void P3DConfig::validate() const {
    if (window < 1 || stride < 1) {
        throw ConfigError("pseudo-3D config requires k >= 1 and s >= 1 (got k=" +
                          std::to_string(window) + ", s=" + std::to_string(stride) + ")");
    }
}

std::array<int64_t, 3> pseudo3d_shape(int64_t height, int64_t width, const P3DConfig& cfg) {
    cfg.validate();
    if (height < cfg.window || width < cfg.window) {
        throw DimensionError("window k=" + std::to_string(cfg.window) + " exceeds image " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    const int64_t span_h = height - cfg.window;
    const int64_t span_w = width - cfg.window;
    if (span_h % cfg.stride != 0 || span_w % cfg.stride != 0) {
        throw ConfigError("stride " + std::to_string(cfg.stride) + " does not divide (H - k) = " +
                          std::to_string(span_h) + " and (W - k) = " + std::to_string(span_w) +
                          "; residues " + std::to_string(span_h % cfg.stride) + ", " +
                          std::to_string(span_w % cfg.stride) +
                          " (crop first, or pass --auto-crop in the CLI)");
    }
    return {span_h / cfg.stride + 1, span_w / cfg.stride + 1, cfg.window * cfg.window};
}

Tensor to_pseudo3d(const Tensor& img, const P3DConfig& cfg) {
    if (img.rank() != 2) {
        throw DimensionError("to_pseudo3d: expected H x W image, got " + shape_str(img) +
                             " (use to_pseudo3d_stack for multi-channel input)");
    }
    const auto [ht, wt, dt] = pseudo3d_shape(img.extent(0), img.extent(1), cfg);
    const int64_t k = cfg.window;
    const int64_t s = cfg.stride;
    const int64_t w = img.extent(1);

    Tensor vol({ht, wt, dt}, 0.0, img.dtype());
    const double* src = img.data();
    double* dst = vol.data();
    for (int64_t i = 0; i < ht; ++i) {
        for (int64_t j = 0; j < wt; ++j) {
            double* fiber = dst + (i * wt + j) * dt;
            const double* corner = src + (i * s) * w + j * s;
            for (int64_t wr = 0; wr < k; ++wr) {
                const double* row = corner + wr * w;
                for (int64_t wc = 0; wc < k; ++wc) {
                    fiber[wr * k + wc] = row[wc];
                }
            }
        }
    }
    return vol;
}

Tensor to_pseudo3d_stack(const Tensor& img, const P3DConfig& cfg) {
    if (img.rank() == 2) {
        const Tensor vol = to_pseudo3d(img, cfg);
        return vol.reshape({vol.extent(0), vol.extent(1), vol.extent(2), 1});
    }
    if (img.rank() != 3) {
        throw DimensionError("to_pseudo3d_stack: expected H x W or H x W x C image, got " +
                             shape_str(img));
    }
    const int64_t h = img.extent(0);
    const int64_t w = img.extent(1);
    const int64_t c = img.extent(2);
    const auto [ht, wt, dt] = pseudo3d_shape(h, w, cfg);
    Tensor out({ht, wt, dt, c}, 0.0, img.dtype());
    Tensor channel({h, w}, 0.0, img.dtype());
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
                channel.at(i, j) = img.at(i, j, ch);
            }
        }
        const Tensor vol = to_pseudo3d(channel, cfg);
        for (int64_t p = 0; p < vol.size(); ++p) {
            out[p * c + ch] = vol[p];
        }
    }
    return out;
}

namespace {

void check_volume_shape(const Tensor& vol, const P3DConfig& cfg, int64_t height, int64_t width) {
    const auto expect = pseudo3d_shape(height, width, cfg);
    if (vol.rank() != 3 || vol.extent(0) != expect[0] || vol.extent(1) != expect[1] ||
        vol.extent(2) != expect[2]) {
        throw DimensionError("volume " + shape_str(vol) + " is not the pseudo-3D image of a " +
                             std::to_string(height) + "x" + std::to_string(width) +
                             " image with k=" + std::to_string(cfg.window) + ", s=" +
                             std::to_string(cfg.stride) + " (expected " +
                             shape_str(std::span<const int64_t>(expect.data(), 3)) + ")");
    }
}

// Source image extents are recoverable from the volume shape:
// H = (H_t - 1) * s + k.
void infer_image_extents(const Tensor& vol, const P3DConfig& cfg, int64_t& height,
                         int64_t& width) {
    cfg.validate();
    if (vol.rank() != 3 || vol.extent(2) != cfg.window * cfg.window) {
        throw DimensionError("volume " + shape_str(vol) + " has no depth extent k*k = " +
                             std::to_string(cfg.window * cfg.window));
    }
    height = (vol.extent(0) - 1) * cfg.stride + cfg.window;
    width = (vol.extent(1) - 1) * cfg.stride + cfg.window;
}

} // namespace

Tensor from_pseudo3d(const Tensor& vol, const P3DConfig& cfg, int64_t height, int64_t width) {
    check_volume_shape(vol, cfg, height, width);
    const int64_t ht = vol.extent(0);
    const int64_t wt = vol.extent(1);
    const int64_t k = cfg.window;
    const int64_t s = cfg.stride;

    // Mean over copies, computed as first-copy + mean deviation from it so
    // that identical copies reconstruct the source value exactly.
    Tensor image({height, width}, 0.0, vol.dtype());
    std::vector<int64_t> counts(static_cast<size_t>(height * width), 0);
    std::vector<double> deviation(static_cast<size_t>(height * width), 0.0);
    const double* src = vol.data();
    for (int64_t i = 0; i < ht; ++i) {
        for (int64_t j = 0; j < wt; ++j) {
            const double* fiber = src + (i * wt + j) * k * k;
            for (int64_t wr = 0; wr < k; ++wr) {
                for (int64_t wc = 0; wc < k; ++wc) {
                    const int64_t pixel = (i * s + wr) * width + (j * s + wc);
                    const double v = fiber[wr * k + wc];
                    if (counts[static_cast<size_t>(pixel)] == 0) {
                        image[pixel] = v;
                    } else {
                        deviation[static_cast<size_t>(pixel)] += v - image[pixel];
                    }
                    ++counts[static_cast<size_t>(pixel)];
                }
            }
        }
    }
    for (int64_t p = 0; p < image.size(); ++p) {
        const int64_t n = counts[static_cast<size_t>(p)];
        if (n > 1) {
            image[p] += deviation[static_cast<size_t>(p)] / static_cast<double>(n);
        }
        // n == 0 (possible only when s > k) leaves the pixel at 0.
    }
    return image;
}

double consistency_residual(const Tensor& vol, const P3DConfig& cfg) {
    int64_t height = 0, width = 0;
    infer_image_extents(vol, cfg, height, width);
    const int64_t ht = vol.extent(0);
    const int64_t wt = vol.extent(1);
    const int64_t k = cfg.window;
    const int64_t s = cfg.stride;

    std::vector<double> lo(static_cast<size_t>(height * width),
                           std::numeric_limits<double>::infinity());
    std::vector<double> hi(static_cast<size_t>(height * width),
                           -std::numeric_limits<double>::infinity());
    const double* src = vol.data();
    for (int64_t i = 0; i < ht; ++i) {
        for (int64_t j = 0; j < wt; ++j) {
            const double* fiber = src + (i * wt + j) * k * k;
            for (int64_t wr = 0; wr < k; ++wr) {
                for (int64_t wc = 0; wc < k; ++wc) {
                    const auto pixel = static_cast<size_t>((i * s + wr) * width + (j * s + wc));
                    const double v = fiber[wr * k + wc];
                    lo[pixel] = std::min(lo[pixel], v);
                    hi[pixel] = std::max(hi[pixel], v);
                }
            }
        }
    }
    double residual = 0.0;
    for (size_t p = 0; p < lo.size(); ++p) {
        if (hi[p] >= lo[p]) {
            residual = std::max(residual, hi[p] - lo[p]);
        }
    }
    return residual;
}

Tensor pseudo3d_for_model(const Tensor& img, const P3DConfig& cfg,
                          const std::array<int64_t, 3>& target) {
    const Tensor vol = to_pseudo3d(img, cfg);
    return resize_trilinear(vol, target[0], target[1], target[2]);
}

Tensor fibers_as_columns(const Tensor& vol) {
    if (vol.rank() != 3) {
        throw DimensionError("fibers_as_columns: expected H_t x W_t x D_t volume, got " +
                             shape_str(vol));
    }
    const int64_t positions = vol.extent(0) * vol.extent(1);
    const int64_t depth = vol.extent(2);
    Tensor m({depth, positions}, 0.0, vol.dtype());
    for (int64_t p = 0; p < positions; ++p) {
        for (int64_t d = 0; d < depth; ++d) {
            m[d * positions + p] = vol[p * depth + d];
        }
    }
    return m;
}

int64_t largest_compatible_extent(int64_t extent, const P3DConfig& cfg) {
    cfg.validate();
    if (extent < cfg.window) {
        throw DimensionError("extent " + std::to_string(extent) + " is smaller than window k=" +
                             std::to_string(cfg.window));
    }
    return cfg.window + ((extent - cfg.window) / cfg.stride) * cfg.stride;
}

Tensor center_crop_compatible(const Tensor& img, const P3DConfig& cfg) {
    if (img.rank() != 2 && img.rank() != 3) {
        throw DimensionError("center_crop_compatible: expected rank-2 or rank-3 image, got " +
                             shape_str(img));
    }
    const int64_t h = img.extent(0);
    const int64_t w = img.extent(1);
    const int64_t ch = largest_compatible_extent(h, cfg);
    const int64_t cw = largest_compatible_extent(w, cfg);
    if (ch == h && cw == w) return img;
    std::vector<int64_t> origin = {(h - ch) / 2, (w - cw) / 2};
    std::vector<int64_t> extent = {ch, cw};
    if (img.rank() == 3) {
        origin.push_back(0);
        extent.push_back(img.extent(2));
    }
    return crop(img, origin, extent);
}

} // namespace p3d
