#include "p3d/im2col.hpp"

#include <string>

namespace p3d {

void ConvSpec::validate() const {
    if (k < 1 || stride < 1 || channels < 1 || kernels < 1 || pad < 0) {
        throw ConfigError("conv spec requires k >= 1, s >= 1, C >= 1, M >= 1, P >= 0 (got k=" +
                          std::to_string(k) + ", s=" + std::to_string(stride) + ", C=" +
                          std::to_string(channels) + ", M=" + std::to_string(kernels) + ", P=" +
                          std::to_string(pad) + ")");
    }
}

int64_t conv_output_extent(int64_t extent, int64_t k, int64_t pad, int64_t stride,
                           const char* axis_name) {
    const int64_t padded = extent + 2 * pad;
    if (padded < k) {
        throw DimensionError(std::string("window k=") + std::to_string(k) + " exceeds padded " +
                             axis_name + " extent " + std::to_string(padded));
    }
    const int64_t span = padded - k;
    if (span % stride != 0) {
        throw ConfigError(std::string("stride ") + std::to_string(stride) + " does not divide (" +
                          axis_name + " + 2P - k) = " + std::to_string(span) + "; residue " +
                          std::to_string(span % stride));
    }
    return span / stride + 1;
}

namespace {

// Accepts H x W (C = 1) or H x W x C.
void unpack_input_shape(const Tensor& input, int64_t& h, int64_t& w, int64_t& c) {
    if (input.rank() == 2) {
        h = input.extent(0);
        w = input.extent(1);
        c = 1;
    } else if (input.rank() == 3) {
        h = input.extent(0);
        w = input.extent(1);
        c = input.extent(2);
    } else {
        throw DimensionError("expected H x W or H x W x C input, got " + shape_str(input));
    }
}

} // namespace

Tensor im2col(const Tensor& input, const ConvSpec& spec) {
    spec.validate();
    int64_t h = 0, w = 0, c = 0;
    unpack_input_shape(input, h, w, c);
    if (c != spec.channels) {
        throw DimensionError("input has " + std::to_string(c) + " channels, spec says " +
                             std::to_string(spec.channels));
    }
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");
    const int64_t rows = spec.k * spec.k * c;
    const int64_t cols_n = out_h * out_w;

    Tensor cols({rows, cols_n}, 0.0, input.dtype());
    const double* src = input.data();
    double* dst = cols.data();
    for (int64_t wr = 0; wr < spec.k; ++wr) {
        for (int64_t wc = 0; wc < spec.k; ++wc) {
            for (int64_t ch = 0; ch < c; ++ch) {
                const int64_t row = (wr * spec.k + wc) * c + ch;
                double* out_row = dst + row * cols_n;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    const int64_t ih = oh * spec.stride - spec.pad + wr;
                    if (ih < 0 || ih >= h) continue; // stays zero
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        const int64_t iw = ow * spec.stride - spec.pad + wc;
                        if (iw < 0 || iw >= w) continue;
                        out_row[oh * out_w + ow] = src[(ih * w + iw) * c + ch];
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im(const Tensor& cols, int64_t height, int64_t width, const ConvSpec& spec) {
    spec.validate();
    if (cols.rank() != 2) {
        throw DimensionError("col2im: expected rank-2 patch matrix, got " + shape_str(cols));
    }
    const int64_t out_h = conv_output_extent(height, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(width, spec.k, spec.pad, spec.stride, "W");
    const int64_t rows = spec.k * spec.k * spec.channels;
    const int64_t cols_n = out_h * out_w;
    if (cols.extent(0) != rows || cols.extent(1) != cols_n) {
        throw DimensionError("col2im: patch matrix is " + shape_str(cols) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols_n) + " for H=" +
                             std::to_string(height) + ", W=" + std::to_string(width));
    }

    Tensor image({height, width, spec.channels}, 0.0, cols.dtype());
    double* dst = image.data();
    const double* src = cols.data();
    // Fixed (row-major over matrix rows, then columns) accumulation order.
    for (int64_t wr = 0; wr < spec.k; ++wr) {
        for (int64_t wc = 0; wc < spec.k; ++wc) {
            for (int64_t ch = 0; ch < spec.channels; ++ch) {
                const int64_t row = (wr * spec.k + wc) * spec.channels + ch;
                const double* in_row = src + row * cols_n;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    const int64_t ih = oh * spec.stride - spec.pad + wr;
                    if (ih < 0 || ih >= height) continue;
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        const int64_t iw = ow * spec.stride - spec.pad + wc;
                        if (iw < 0 || iw >= width) continue;
                        dst[(ih * width + iw) * spec.channels + ch] += in_row[oh * out_w + ow];
                    }
                }
            }
        }
    }
    return image;
}

Tensor conv2d_gemm(const Tensor& input, const Tensor& kernels, const ConvSpec& spec) {
    spec.validate();
    if (kernels.rank() != 4 || kernels.extent(0) != spec.kernels ||
        kernels.extent(1) != spec.k || kernels.extent(2) != spec.k ||
        kernels.extent(3) != spec.channels) {
        throw DimensionError("conv2d_gemm: kernel tensor is " + shape_str(kernels) +
                             ", spec requires " + std::to_string(spec.kernels) + "x" +
                             std::to_string(spec.k) + "x" + std::to_string(spec.k) + "x" +
                             std::to_string(spec.channels));
    }
    int64_t h = 0, w = 0, c = 0;
    unpack_input_shape(input, h, w, c);
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");

    // An M x k x k x C kernel tensor flattened row-major is exactly the
    // kernel-patch-matrix: per kernel, elements run (row, col, channel).
    const Tensor kernel_matrix = kernels.reshape({spec.kernels, spec.k * spec.k * spec.channels});
    const Tensor cols = im2col(input, spec);
    const Tensor prod = matmul(kernel_matrix, cols); // M x (out_h * out_w)

    Tensor out({out_h, out_w, spec.kernels}, 0.0, input.dtype());
    const int64_t positions = out_h * out_w;
    for (int64_t m = 0; m < spec.kernels; ++m) {
        const double* prow = prod.data() + m * positions;
        for (int64_t p = 0; p < positions; ++p) {
            out[p * spec.kernels + m] = prow[p];
        }
    }
    return out;
}

} // namespace p3d
