#ifndef P3D_SSL_HPP
#define P3D_SSL_HPP

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "p3d/tensor.hpp"

namespace p3d {

/// 3D convolution parameters: cubic k^3 kernels, C input channels,
/// M kernels, symmetric zero padding P, stride s on all spatial axes.
struct Conv3dSpec {
    int64_t k = 3;
    int64_t channels = 1; // C
    int64_t kernels = 1;  // M
    int64_t pad = 0;      // P
    int64_t stride = 1;   // s

    void validate() const;
};

/// 3D analogue of im2col: every k^3 window of an H x W x D x C input
/// (rank-3 inputs are C = 1) becomes one column of a
/// (k^3 * C) x (H_o * W_o * D_o) matrix. Columns enumerate output
/// positions row-major; within a column elements follow
/// (window-h, window-w, window-d, channel) row-major.
Tensor im2col3d(const Tensor& input, const Conv3dSpec& spec);

/// Adjoint of im2col3d; accumulates matrix elements back onto an
/// H x W x D x C tensor in a fixed order.
Tensor col2im3d(const Tensor& cols, int64_t height, int64_t width, int64_t depth,
                const Conv3dSpec& spec);

/// GEMM-lowered 3D convolution. kernels is M x k x k x k x C; the result is
/// H_o x W_o x D_o x M and equals direct convolution.
Tensor conv3d_forward(const Tensor& input, const Tensor& kernels, const Conv3dSpec& spec);

struct Conv3dGrads {
    Tensor input;   // same shape as the forward input
    Tensor kernels; // same shape as the kernel tensor
};

/// Exact gradients of conv3d_forward: grad_input via col2im3d of
/// kernel-matrix^T * grad, grad_kernels via grad * cols^T.
Conv3dGrads conv3d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                            const Conv3dSpec& spec);

struct ValueGrad {
    double value = 0.0;
    Tensor grad;
};

/// Mean squared error over all elements with its exact gradient
/// 2 * (pred - target) / N with respect to pred.
ValueGrad loss_reconstruction(const Tensor& pred, const Tensor& target);

struct PairGrad {
    double value = 0.0;
    Tensor grad_a;
    Tensor grad_b;
};

/// 1 - cosine similarity of two equal-length vectors (length >= 2) with
/// exact gradients for both arguments. Zero-norm inputs are degenerate.
PairGrad loss_feature_compare(const Tensor& a, const Tensor& b);

// Minimal 3D conv net for gradient checks and training smoke tests. One
// ordered layer list; the feature head is a global average pool over the
// output of layers[feature_tap].

struct Conv3dLayer {
    Conv3dSpec spec;
    Tensor kernels; // M x k x k x k x C
};
struct ReluLayer {};
struct AvgPoolLayer {};  // 2^3 mean pool; spatial extents must be even
struct UpsampleLayer {}; // 2^3 nearest-neighbor

using Layer = std::variant<Conv3dLayer, ReluLayer, AvgPoolLayer, UpsampleLayer>;

struct MiniNet {
    std::vector<Layer> layers;
    int64_t feature_tap = 0;

    void validate() const;
    int64_t parameter_count() const;

    /// Two 3 x 3 x 3 convolutions around a ReLU (1 -> 2 -> 1 channels,
    /// padding 1), feature tap on the first conv. 54 parameters per conv,
    /// shapes chain for any input with extents >= 2. Weights are uniform
    /// in [-b, b], b = 1 / sqrt(fan-in), drawn from the given seed.
    static MiniNet smoke_default(uint64_t seed);
};

struct ForwardTrace {
    std::vector<Tensor> inputs; // input seen by each layer
    Tensor output;              // final activation, H x W x D x C
    Tensor features;            // pooled tap activation, rank-1
};

/// Run the net on an H x W x D (x C) input, recording what backward needs.
ForwardTrace net_forward(const MiniNet& net, const Tensor& x);

struct NetGrads {
    std::vector<Tensor> params; // one per layer; empty for parameter-free layers
    Tensor input;
};

/// Backpropagate the pair (d loss / d output, d loss / d features); the
/// feature gradient re-enters at the tap layer.
NetGrads net_backward(const MiniNet& net, const ForwardTrace& trace, const Tensor& grad_output,
                      const Tensor& grad_features);

/// Plain full-batch gradient descent on view pairs. The step loss is
/// mean over pairs of: (MSE(recon_a, a) + MSE(recon_b, b)) / 2
/// + (1 - cos(features_a, features_b)). Returns the per-step losses
/// (length `steps`); a non-finite loss aborts with the failing step named.
/// Single-threaded and bit-reproducible; lr = 0 leaves the net untouched.
std::vector<double> train_smoke(MiniNet& net, const std::vector<std::pair<Tensor, Tensor>>& pairs,
                                int64_t steps, double lr);

} // namespace p3d

#endif
