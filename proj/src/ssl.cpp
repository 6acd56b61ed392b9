#include "p3d/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "p3d/im2col.hpp"
#include "p3d/rng.hpp"

namespace p3d {

void Conv3dSpec::validate() const {
    if (k < 1 || stride < 1 || channels < 1 || kernels < 1 || pad < 0) {
        throw ConfigError("conv3d spec requires k >= 1, s >= 1, C >= 1, M >= 1, P >= 0 (got k=" +
                          std::to_string(k) + ", s=" + std::to_string(stride) + ", C=" +
                          std::to_string(channels) + ", M=" + std::to_string(kernels) + ", P=" +
                          std::to_string(pad) + ")");
    }
}

namespace {

// Accepts H x W x D (C = 1) or H x W x D x C.
void unpack_volume_shape(const Tensor& input, int64_t& h, int64_t& w, int64_t& d, int64_t& c) {
    if (input.rank() == 3) {
        h = input.extent(0);
        w = input.extent(1);
        d = input.extent(2);
        c = 1;
    } else if (input.rank() == 4) {
        h = input.extent(0);
        w = input.extent(1);
        d = input.extent(2);
        c = input.extent(3);
    } else {
        throw DimensionError("expected H x W x D or H x W x D x C input, got " + shape_str(input));
    }
}

void check_kernel_shape(const Tensor& kernels, const Conv3dSpec& spec) {
    if (kernels.rank() != 5 || kernels.extent(0) != spec.kernels ||
        kernels.extent(1) != spec.k || kernels.extent(2) != spec.k ||
        kernels.extent(3) != spec.k || kernels.extent(4) != spec.channels) {
        throw DimensionError("conv3d: kernel tensor is " + shape_str(kernels) +
                             ", spec requires " + std::to_string(spec.kernels) + "x" +
                             std::to_string(spec.k) + "x" + std::to_string(spec.k) + "x" +
                             std::to_string(spec.k) + "x" + std::to_string(spec.channels));
    }
}

} // namespace

Tensor im2col3d(const Tensor& input, const Conv3dSpec& spec) {
    spec.validate();
    int64_t h = 0, w = 0, d = 0, c = 0;
    unpack_volume_shape(input, h, w, d, c);
    if (c != spec.channels) {
        throw DimensionError("input has " + std::to_string(c) + " channels, spec says " +
                             std::to_string(spec.channels));
    }
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");
    const int64_t out_d = conv_output_extent(d, spec.k, spec.pad, spec.stride, "D");
    const int64_t rows = spec.k * spec.k * spec.k * c;
    const int64_t cols_n = out_h * out_w * out_d;

    Tensor cols({rows, cols_n}, 0.0, input.dtype());
    const double* src = input.data();
    double* dst = cols.data();
    for (int64_t wh = 0; wh < spec.k; ++wh) {
        for (int64_t ww = 0; ww < spec.k; ++ww) {
            for (int64_t wd = 0; wd < spec.k; ++wd) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    const int64_t row = ((wh * spec.k + ww) * spec.k + wd) * c + ch;
                    double* out_row = dst + row * cols_n;
                    for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t ih = oh * spec.stride - spec.pad + wh;
                        if (ih < 0 || ih >= h) continue; // stays zero
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                            const int64_t iw = ow * spec.stride - spec.pad + ww;
                            if (iw < 0 || iw >= w) continue;
                            for (int64_t od = 0; od < out_d; ++od) {
                                const int64_t id = od * spec.stride - spec.pad + wd;
                                if (id < 0 || id >= d) continue;
                                out_row[(oh * out_w + ow) * out_d + od] =
                                    src[((ih * w + iw) * d + id) * c + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im3d(const Tensor& cols, int64_t height, int64_t width, int64_t depth,
                const Conv3dSpec& spec) {
    spec.validate();
    if (cols.rank() != 2) {
        throw DimensionError("col2im3d: expected rank-2 patch matrix, got " + shape_str(cols));
    }
    const int64_t out_h = conv_output_extent(height, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(width, spec.k, spec.pad, spec.stride, "W");
    const int64_t out_d = conv_output_extent(depth, spec.k, spec.pad, spec.stride, "D");
    const int64_t rows = spec.k * spec.k * spec.k * spec.channels;
    const int64_t cols_n = out_h * out_w * out_d;
    if (cols.extent(0) != rows || cols.extent(1) != cols_n) {
        throw DimensionError("col2im3d: patch matrix is " + shape_str(cols) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols_n));
    }

    Tensor volume({height, width, depth, spec.channels}, 0.0, cols.dtype());
    double* dst = volume.data();
    const double* src = cols.data();
    // Fixed accumulation order: matrix rows outermost, then output positions.
    for (int64_t wh = 0; wh < spec.k; ++wh) {
        for (int64_t ww = 0; ww < spec.k; ++ww) {
            for (int64_t wd = 0; wd < spec.k; ++wd) {
                for (int64_t ch = 0; ch < spec.channels; ++ch) {
                    const int64_t row = ((wh * spec.k + ww) * spec.k + wd) * spec.channels + ch;
                    const double* in_row = src + row * cols_n;
                    for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t ih = oh * spec.stride - spec.pad + wh;
                        if (ih < 0 || ih >= height) continue;
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                            const int64_t iw = ow * spec.stride - spec.pad + ww;
                            if (iw < 0 || iw >= width) continue;
                            for (int64_t od = 0; od < out_d; ++od) {
                                const int64_t id = od * spec.stride - spec.pad + wd;
                                if (id < 0 || id >= depth) continue;
                                dst[((ih * width + iw) * depth + id) * spec.channels + ch] +=
                                    in_row[(oh * out_w + ow) * out_d + od];
                            }
                        }
                    }
                }
            }
        }
    }
    return volume;
}

Tensor conv3d_forward(const Tensor& input, const Tensor& kernels, const Conv3dSpec& spec) {
    spec.validate();
    check_kernel_shape(kernels, spec);
    int64_t h = 0, w = 0, d = 0, c = 0;
    unpack_volume_shape(input, h, w, d, c);
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");
    const int64_t out_d = conv_output_extent(d, spec.k, spec.pad, spec.stride, "D");

    // Row-major kernel flattening matches the im2col3d row order.
    const Tensor kernel_matrix =
        kernels.reshape({spec.kernels, spec.k * spec.k * spec.k * spec.channels});
    const Tensor cols = im2col3d(input, spec);
    const Tensor prod = matmul(kernel_matrix, cols); // M x positions

    Tensor out({out_h, out_w, out_d, spec.kernels}, 0.0, input.dtype());
    const int64_t positions = out_h * out_w * out_d;
    for (int64_t m = 0; m < spec.kernels; ++m) {
        const double* prow = prod.data() + m * positions;
        for (int64_t p = 0; p < positions; ++p) {
            out[p * spec.kernels + m] = prow[p];
        }
    }
    return out;
}

Conv3dGrads conv3d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                            const Conv3dSpec& spec) {
    spec.validate();
    check_kernel_shape(kernels, spec);
    int64_t h = 0, w = 0, d = 0, c = 0;
    unpack_volume_shape(input, h, w, d, c);
    const int64_t out_h = conv_output_extent(h, spec.k, spec.pad, spec.stride, "H");
    const int64_t out_w = conv_output_extent(w, spec.k, spec.pad, spec.stride, "W");
    const int64_t out_d = conv_output_extent(d, spec.k, spec.pad, spec.stride, "D");
    if (grad_out.rank() != 4 || grad_out.extent(0) != out_h || grad_out.extent(1) != out_w ||
        grad_out.extent(2) != out_d || grad_out.extent(3) != spec.kernels) {
        throw DimensionError("conv3d_backward: grad is " + shape_str(grad_out) + ", expected " +
                             std::to_string(out_h) + "x" + std::to_string(out_w) + "x" +
                             std::to_string(out_d) + "x" + std::to_string(spec.kernels));
    }

    const int64_t positions = out_h * out_w * out_d;
    Tensor grad_mat({spec.kernels, positions}, 0.0);
    for (int64_t m = 0; m < spec.kernels; ++m) {
        double* grow = grad_mat.data() + m * positions;
        for (int64_t p = 0; p < positions; ++p) {
            grow[p] = grad_out[p * spec.kernels + m];
        }
    }

    const Tensor cols = im2col3d(input, spec);
    const Tensor kernel_matrix =
        kernels.reshape({spec.kernels, spec.k * spec.k * spec.k * spec.channels});

    Conv3dGrads grads;
    grads.kernels = matmul(grad_mat, transpose(cols)).reshape(kernels.shape());
    Tensor gi = col2im3d(matmul(transpose(kernel_matrix), grad_mat), h, w, d, spec);
    grads.input = input.rank() == 3 ? gi.reshape(input.shape()) : std::move(gi);
    return grads;
}

ValueGrad loss_reconstruction(const Tensor& pred, const Tensor& target) {
    if (!same_shape(pred, target)) {
        throw DimensionError("loss_reconstruction: shapes differ, " + shape_str(pred) + " vs " +
                             shape_str(target));
    }
    const auto n = static_cast<double>(pred.size());
    ValueGrad out;
    out.grad = Tensor(pred.shape(), 0.0);
    double acc = 0.0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - target[i];
        acc += diff * diff;
        out.grad[i] = 2.0 * diff / n;
    }
    out.value = acc / n;
    return out;
}

PairGrad loss_feature_compare(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
        throw DimensionError("loss_feature_compare: expected equal-length vectors, got " +
                             shape_str(a) + " and " + shape_str(b));
    }
    if (a.size() < 2) {
        throw DimensionError("loss_feature_compare: vectors must have length >= 2");
    }
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) {
        throw DegenerateInputError("loss_feature_compare: zero-norm feature vector");
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    const double cosine = dot / (na * nb);

    PairGrad out;
    out.value = 1.0 - cosine;
    out.grad_a = Tensor(a.shape(), 0.0);
    out.grad_b = Tensor(b.shape(), 0.0);
    // d(1 - cos)/da_i = cos * a_i / |a|^2 - b_i / (|a| |b|), symmetrically for b.
    for (int64_t i = 0; i < a.size(); ++i) {
        out.grad_a[i] = cosine * a[i] / na2 - b[i] / (na * nb);
        out.grad_b[i] = cosine * b[i] / nb2 - a[i] / (na * nb);
    }
    return out;
}

void MiniNet::validate() const {
    if (layers.empty()) throw ConfigError("net has no layers");
    if (feature_tap < 0 || feature_tap >= static_cast<int64_t>(layers.size())) {
        throw ConfigError("feature_tap " + std::to_string(feature_tap) +
                          " is outside the layer list (size " + std::to_string(layers.size()) +
                          ")");
    }
    for (const auto& layer : layers) {
        if (const auto* conv = std::get_if<Conv3dLayer>(&layer)) {
            conv->spec.validate();
            check_kernel_shape(conv->kernels, conv->spec);
        }
    }
}

int64_t MiniNet::parameter_count() const {
    int64_t count = 0;
    for (const auto& layer : layers) {
        if (const auto* conv = std::get_if<Conv3dLayer>(&layer)) {
            count += conv->kernels.size();
        }
    }
    return count;
}

namespace {

Tensor init_kernels(const Conv3dSpec& spec, rng::Stream& stream) {
    const int64_t fan_in = spec.k * spec.k * spec.k * spec.channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor kernels({spec.kernels, spec.k, spec.k, spec.k, spec.channels}, 0.0);
    for (int64_t i = 0; i < kernels.size(); ++i) {
        kernels[i] = stream.uniform(-bound, bound);
    }
    return kernels;
}

} // namespace

MiniNet MiniNet::smoke_default(uint64_t seed) {
    MiniNet net;
    Conv3dSpec enc{3, 1, 2, 1, 1};
    Conv3dSpec dec{3, 2, 1, 1, 1};
    auto s0 = rng::derive_stream(seed, rng::kTagInit, 0);
    auto s1 = rng::derive_stream(seed, rng::kTagInit, 1);
    net.layers.push_back(Conv3dLayer{enc, init_kernels(enc, s0)});
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(Conv3dLayer{dec, init_kernels(dec, s1)});
    net.feature_tap = 0;
    return net;
}

namespace {

Tensor as_rank4(const Tensor& x) {
    if (x.rank() == 4) return x;
    if (x.rank() == 3) return x.reshape({x.extent(0), x.extent(1), x.extent(2), 1});
    throw DimensionError("net input must be H x W x D (x C), got " + shape_str(x));
}

Tensor layer_forward(const Layer& layer, const Tensor& x) {
    if (const auto* conv = std::get_if<Conv3dLayer>(&layer)) {
        return conv3d_forward(x, conv->kernels, conv->spec);
    }
    if (std::holds_alternative<ReluLayer>(layer)) {
        Tensor out = x;
        for (int64_t i = 0; i < out.size(); ++i) {
            out[i] = std::max(out[i], 0.0);
        }
        return out;
    }
    if (std::holds_alternative<AvgPoolLayer>(layer)) {
        const int64_t h = x.extent(0), w = x.extent(1), d = x.extent(2), c = x.extent(3);
        if (h % 2 || w % 2 || d % 2) {
            throw DimensionError("avg pool needs even spatial extents, got " + shape_str(x));
        }
        Tensor out({h / 2, w / 2, d / 2, c}, 0.0, x.dtype());
        for (int64_t i = 0; i < h / 2; ++i) {
            for (int64_t j = 0; j < w / 2; ++j) {
                for (int64_t l = 0; l < d / 2; ++l) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        double acc = 0.0;
                        for (int64_t di = 0; di < 2; ++di) {
                            for (int64_t dj = 0; dj < 2; ++dj) {
                                for (int64_t dl = 0; dl < 2; ++dl) {
                                    acc += x.at(2 * i + di, 2 * j + dj, 2 * l + dl, ch);
                                }
                            }
                        }
                        out.at(i, j, l, ch) = acc / 8.0;
                    }
                }
            }
        }
        return out;
    }
    const int64_t h = x.extent(0), w = x.extent(1), d = x.extent(2), c = x.extent(3);
    Tensor out({h * 2, w * 2, d * 2, c}, 0.0, x.dtype());
    for (int64_t i = 0; i < h * 2; ++i) {
        for (int64_t j = 0; j < w * 2; ++j) {
            for (int64_t l = 0; l < d * 2; ++l) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    out.at(i, j, l, ch) = x.at(i / 2, j / 2, l / 2, ch);
                }
            }
        }
    }
    return out;
}

// Returns the gradient with respect to the layer input; conv layers also
// fill param_grad.
Tensor layer_backward(const Layer& layer, const Tensor& input, const Tensor& grad_out,
                      Tensor* param_grad) {
    if (const auto* conv = std::get_if<Conv3dLayer>(&layer)) {
        Conv3dGrads grads = conv3d_backward(input, conv->kernels, grad_out, conv->spec);
        *param_grad = std::move(grads.kernels);
        return std::move(grads.input);
    }
    if (std::holds_alternative<ReluLayer>(layer)) {
        Tensor out = grad_out;
        for (int64_t i = 0; i < out.size(); ++i) {
            if (input[i] <= 0.0) out[i] = 0.0;
        }
        return out;
    }
    if (std::holds_alternative<AvgPoolLayer>(layer)) {
        Tensor out(input.shape(), 0.0);
        const int64_t h = input.extent(0), w = input.extent(1), d = input.extent(2),
                      c = input.extent(3);
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
                for (int64_t l = 0; l < d; ++l) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        out.at(i, j, l, ch) = grad_out.at(i / 2, j / 2, l / 2, ch) / 8.0;
                    }
                }
            }
        }
        return out;
    }
    Tensor out(input.shape(), 0.0);
    const int64_t h = input.extent(0), w = input.extent(1), d = input.extent(2),
                  c = input.extent(3);
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            for (int64_t l = 0; l < d; ++l) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    double acc = 0.0;
                    for (int64_t di = 0; di < 2; ++di) {
                        for (int64_t dj = 0; dj < 2; ++dj) {
                            for (int64_t dl = 0; dl < 2; ++dl) {
                                acc += grad_out.at(2 * i + di, 2 * j + dj, 2 * l + dl, ch);
                            }
                        }
                    }
                    out.at(i, j, l, ch) = acc;
                }
            }
        }
    }
    return out;
}

Tensor global_average_pool(const Tensor& x) {
    const int64_t c = x.extent(3);
    const int64_t spatial = x.size() / c;
    Tensor out({c}, 0.0);
    for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t p = 0; p < spatial; ++p) {
            acc += x[p * c + ch];
        }
        out[ch] = acc / static_cast<double>(spatial);
    }
    return out;
}

Tensor global_average_pool_backward(const Tensor& grad_features, const Tensor& tap_output) {
    const int64_t c = tap_output.extent(3);
    const int64_t spatial = tap_output.size() / c;
    Tensor out(tap_output.shape(), 0.0);
    for (int64_t ch = 0; ch < c; ++ch) {
        const double g = grad_features[ch] / static_cast<double>(spatial);
        for (int64_t p = 0; p < spatial; ++p) {
            out[p * c + ch] = g;
        }
    }
    return out;
}

} // namespace

ForwardTrace net_forward(const MiniNet& net, const Tensor& x) {
    net.validate();
    ForwardTrace trace;
    Tensor cur = as_rank4(x);
    Tensor tap;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        trace.inputs.push_back(cur);
        cur = layer_forward(net.layers[i], cur);
        if (static_cast<int64_t>(i) == net.feature_tap) tap = cur;
    }
    trace.output = std::move(cur);
    trace.features = global_average_pool(tap);
    // Tap output is recomputable from inputs, but keep it for backward.
    trace.inputs.push_back(tap);
    return trace;
}

NetGrads net_backward(const MiniNet& net, const ForwardTrace& trace, const Tensor& grad_output,
                      const Tensor& grad_features) {
    net.validate();
    const auto n_layers = static_cast<int64_t>(net.layers.size());
    if (static_cast<int64_t>(trace.inputs.size()) != n_layers + 1) {
        throw DimensionError("net_backward: trace does not match the layer list");
    }
    const Tensor& tap_output = trace.inputs.back();

    NetGrads grads;
    grads.params.resize(static_cast<size_t>(n_layers));
    Tensor g = grad_output;
    for (int64_t i = n_layers - 1; i >= 0; --i) {
        if (i == net.feature_tap) {
            g = add(g, global_average_pool_backward(grad_features, tap_output));
        }
        g = layer_backward(net.layers[static_cast<size_t>(i)],
                           trace.inputs[static_cast<size_t>(i)], g,
                           &grads.params[static_cast<size_t>(i)]);
    }
    grads.input = std::move(g);
    return grads;
}

std::vector<double> train_smoke(MiniNet& net, const std::vector<std::pair<Tensor, Tensor>>& pairs,
                                int64_t steps, double lr) {
    net.validate();
    if (pairs.empty()) throw ConfigError("train_smoke: no view pairs");
    if (steps < 1) throw ConfigError("train_smoke: steps must be >= 1");

    const auto n_layers = net.layers.size();
    std::vector<double> losses;
    losses.reserve(static_cast<size_t>(steps));

    for (int64_t step = 0; step < steps; ++step) {
        std::vector<Tensor> accum(n_layers);
        for (size_t i = 0; i < n_layers; ++i) {
            if (const auto* conv = std::get_if<Conv3dLayer>(&net.layers[i])) {
                accum[i] = Tensor(conv->kernels.shape(), 0.0);
            }
        }

        double loss_sum = 0.0;
        for (const auto& [view_a, view_b] : pairs) {
            const Tensor a = as_rank4(view_a);
            const Tensor b = as_rank4(view_b);
            const ForwardTrace fa = net_forward(net, a);
            const ForwardTrace fb = net_forward(net, b);

            const ValueGrad rec_a = loss_reconstruction(fa.output, a);
            const ValueGrad rec_b = loss_reconstruction(fb.output, b);
            const PairGrad feat = loss_feature_compare(fa.features, fb.features);
            loss_sum += 0.5 * (rec_a.value + rec_b.value) + feat.value;

            const NetGrads ga = net_backward(net, fa, scale(rec_a.grad, 0.5), feat.grad_a);
            const NetGrads gb = net_backward(net, fb, scale(rec_b.grad, 0.5), feat.grad_b);
            for (size_t i = 0; i < n_layers; ++i) {
                if (accum[i].empty()) continue;
                accum[i] = add(accum[i], ga.params[i]);
                accum[i] = add(accum[i], gb.params[i]);
            }
        }

        const double loss = loss_sum / static_cast<double>(pairs.size());
        if (!std::isfinite(loss)) {
            throw TrainingError("loss became non-finite at step " + std::to_string(step));
        }
        losses.push_back(loss);

        const double factor = lr / static_cast<double>(pairs.size());
        for (size_t i = 0; i < n_layers; ++i) {
            if (auto* conv = std::get_if<Conv3dLayer>(&net.layers[i])) {
                Tensor& k = conv->kernels;
                const Tensor& g = accum[i];
                for (int64_t p = 0; p < k.size(); ++p) {
                    k[p] -= factor * g[p];
                }
            }
        }
    }
    return losses;
}

} // namespace p3d
