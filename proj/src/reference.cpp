#include "p3d/reference.hpp"

namespace p3d::ref {

Tensor conv2d_direct(const Tensor& input, const Tensor& kernels, const ConvSpec& spec) {
    spec.validate();
    int64_t h = 0, w = 0, c = 0;
    if (input.rank() == 2) {
        h = input.extent(0);
        w = input.extent(1);
        c = 1;
    } else if (input.rank() == 3) {
        h = input.extent(0);
        w = input.extent(1);
        c = input.extent(2);
    } else {
        throw DimensionError("conv2d_direct: expected rank-2/3 input, got " + shape_str(input));
    }
    if (kernels.rank() != 4 || kernels.extent(0) != spec.kernels || kernels.extent(1) != spec.k ||
        kernels.extent(2) != spec.k || kernels.extent(3) != c) {
        throw DimensionError("conv2d_direct: kernel tensor is " + shape_str(kernels));
    }
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");

    Tensor out({out_h, out_w, spec.kernels}, 0.0, input.dtype());
    for (int64_t oh = 0; oh < out_h; ++oh) {
        for (int64_t ow = 0; ow < out_w; ++ow) {
            for (int64_t m = 0; m < spec.kernels; ++m) {
                double acc = 0.0;
                for (int64_t wr = 0; wr < spec.k; ++wr) {
                    const int64_t ih = oh * spec.stride - spec.pad + wr;
                    if (ih < 0 || ih >= h) continue;
                    for (int64_t wc = 0; wc < spec.k; ++wc) {
                        const int64_t iw = ow * spec.stride - spec.pad + wc;
                        if (iw < 0 || iw >= w) continue;
                        for (int64_t ch = 0; ch < c; ++ch) {
                            acc += input[(ih * w + iw) * c + ch] *
                                   kernels.at(m, wr, wc, ch);
                        }
                    }
                }
                out.at(oh, ow, m) = acc;
            }
        }
    }
    return out;
}

Tensor conv3d_direct(const Tensor& input, const Tensor& kernels, int64_t k, int64_t stride,
                     int64_t pad) {
    if (input.rank() != 4) {
        throw DimensionError("conv3d_direct: expected H x W x D x C input, got " +
                             shape_str(input));
    }
    const int64_t h = input.extent(0);
    const int64_t w = input.extent(1);
    const int64_t d = input.extent(2);
    const int64_t c = input.extent(3);
    if (kernels.rank() != 5 || kernels.extent(1) != k || kernels.extent(2) != k ||
        kernels.extent(3) != k || kernels.extent(4) != c) {
        throw DimensionError("conv3d_direct: kernel tensor is " + shape_str(kernels));
    }
    const int64_t m_n = kernels.extent(0);
    const int64_t out_h = conv_output_extent(h, k, pad, stride, "H");
    const int64_t out_w = conv_output_extent(w, k, pad, stride, "W");
    const int64_t out_d = conv_output_extent(d, k, pad, stride, "D");

    Tensor out({out_h, out_w, out_d, m_n}, 0.0, input.dtype());
    for (int64_t oh = 0; oh < out_h; ++oh) {
        for (int64_t ow = 0; ow < out_w; ++ow) {
            for (int64_t od = 0; od < out_d; ++od) {
                for (int64_t m = 0; m < m_n; ++m) {
                    double acc = 0.0;
                    for (int64_t wh = 0; wh < k; ++wh) {
                        const int64_t ih = oh * stride - pad + wh;
                        if (ih < 0 || ih >= h) continue;
                        for (int64_t ww = 0; ww < k; ++ww) {
                            const int64_t iw = ow * stride - pad + ww;
                            if (iw < 0 || iw >= w) continue;
                            for (int64_t wd = 0; wd < k; ++wd) {
                                const int64_t id = od * stride - pad + wd;
                                if (id < 0 || id >= d) continue;
                                for (int64_t ch = 0; ch < c; ++ch) {
                                    acc += input[((ih * w + iw) * d + id) * c + ch] *
                                           kernels[(((m * k + wh) * k + ww) * k + wd) * c + ch];
                                }
                            }
                        }
                    }
                    out[((oh * out_w + ow) * out_d + od) * m_n + m] = acc;
                }
            }
        }
    }
    return out;
}

} // namespace p3d::ref
