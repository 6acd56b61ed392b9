#include "p3d/verify.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "p3d/augment.hpp"
#include "p3d/im2col.hpp"
#include "p3d/pseudo3d.hpp"
#include "p3d/reference.hpp"
#include "p3d/rng.hpp"
#include "p3d/ssl.hpp"
#include "p3d/tensor.hpp"

namespace p3d {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

Tensor random_tensor(std::vector<int64_t> shape, rng::Stream& stream, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) {
        t[i] = stream.uniform(lo, hi);
    }
    return t;
}

double inner(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

// Relative error, guarded near zero: |a - f| / max(1, |a|, |f|).
double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Central finite differences of a scalar function with respect to one
// tensor argument, compared elementwise against the analytic gradient.
double max_fd_error(const Tensor& point, const Tensor& analytic_grad,
                    const std::function<double(const Tensor&)>& f, double h = 1e-5) {
    double worst = 0.0;
    Tensor probe = point;
    for (int64_t i = 0; i < point.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = f(probe);
        probe[i] = saved - h;
        const double down = f(probe);
        probe[i] = saved;
        worst = std::max(worst, rel_err(analytic_grad[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

VerifyCheck check_matmul(rng::Stream& stream) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t m = stream.uniform_int(1, 8);
        const int64_t k = stream.uniform_int(1, 8);
        const int64_t n = stream.uniform_int(1, 8);
        const Tensor a = random_tensor({m, k}, stream);
        const Tensor b = random_tensor({k, n}, stream);
        const Tensor prod = matmul(a, b);
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t kk = 0; kk < k; ++kk) acc += a.at(i, kk) * b.at(kk, j);
                worst = std::max(worst, std::abs(prod.at(i, j) - acc));
            }
        }
    }
    return {"matmul vs scalar reference", worst <= 1e-12, "max abs diff " + fmt(worst)};
}

VerifyCheck check_shape_laws(rng::Stream& stream) {
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t k = stream.uniform_int(1, 5);
        const int64_t s = stream.uniform_int(1, 3);
        const int64_t p = stream.uniform_int(0, 2);
        const int64_t c = stream.uniform_int(1, 3);
        const int64_t oh = stream.uniform_int(1, 5);
        const int64_t ow = stream.uniform_int(1, 5);
        const int64_t h = k + (oh - 1) * s - 2 * p;
        const int64_t w = k + (ow - 1) * s - 2 * p;
        if (h < 1 || w < 1) continue;

        ConvSpec spec{k, c, 1, p, s};
        const Tensor cols = im2col(random_tensor({h, w, c}, stream), spec);
        if (cols.extent(0) != k * k * c || cols.extent(1) != oh * ow) {
            return {"shape laws", false,
                    "im2col gave " + shape_str(cols) + " for k=" + std::to_string(k)};
        }
        if (p == 0) {
            P3DConfig cfg{k, s};
            const auto sh = pseudo3d_shape(h, w, cfg);
            if (sh[0] != oh || sh[1] != ow || sh[2] != k * k) {
                return {"shape laws", false, "window transform shape mismatch"};
            }
        }
    }
    return {"shape laws", true, "100 random draws"};
}

VerifyCheck check_correspondence(rng::Stream& stream) {
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t k = stream.uniform_int(1, 5);
        const int64_t s = stream.uniform_int(1, 3);
        const int64_t oh = stream.uniform_int(1, 5);
        const int64_t ow = stream.uniform_int(1, 5);
        const int64_t h = k + (oh - 1) * s;
        const int64_t w = k + (ow - 1) * s;
        const Tensor img = random_tensor({h, w}, stream);
        const P3DConfig cfg{k, s};
        const Tensor fibers = fibers_as_columns(to_pseudo3d(img, cfg));
        const Tensor cols = im2col(img, ConvSpec{k, 1, 1, 0, s});
        if (!bitwise_equal(fibers, cols)) {
            return {"window transform matches im2col", false, "mismatch at trial " +
                                                                  std::to_string(trial)};
        }
    }
    return {"window transform matches im2col", true, "20 cases bitwise"};
}

VerifyCheck check_round_trip(rng::Stream& stream) {
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t k = 1 + 2 * stream.uniform_int(0, 3); // 1, 3, 5, 7
        int64_t s = stream.uniform_int(1, 3);
        if (s > k) s = k;
        const int64_t oh = stream.uniform_int(1, 5);
        const int64_t ow = stream.uniform_int(1, 5);
        const Tensor img = random_tensor({k + (oh - 1) * s, k + (ow - 1) * s}, stream);
        const P3DConfig cfg{k, s};
        const Tensor back = from_pseudo3d(to_pseudo3d(img, cfg), cfg, img.extent(0),
                                          img.extent(1));
        if (!bitwise_equal(img, back)) {
            return {"round trip is exact", false,
                    "k=" + std::to_string(k) + " s=" + std::to_string(s) + " diff " +
                        fmt(max_abs_diff(img, back))};
        }
    }
    return {"round trip is exact", true, "20 cases bitwise"};
}

VerifyCheck check_adjointness(rng::Stream& stream) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t k = stream.uniform_int(1, 4);
        const int64_t s = stream.uniform_int(1, 2);
        const int64_t p = stream.uniform_int(0, 1);
        const int64_t c = stream.uniform_int(1, 2);
        const int64_t h = std::max<int64_t>(k - 2 * p, 1) + s * stream.uniform_int(0, 3);
        const int64_t w = std::max<int64_t>(k - 2 * p, 1) + s * stream.uniform_int(0, 3);
        if ((h + 2 * p - k) % s != 0 || (w + 2 * p - k) % s != 0) continue;
        if (h + 2 * p < k || w + 2 * p < k) continue;
        ConvSpec spec{k, c, 1, p, s};
        const Tensor x = random_tensor({h, w, c}, stream);
        const Tensor cx = im2col(x, spec);
        const Tensor y = random_tensor(cx.shape(), stream);
        const double lhs = inner(cx, y);
        const double rhs = inner(x, col2im(y, h, w, spec));
        worst = std::max(worst, rel_err(lhs, rhs));
    }
    return {"im2col / col2im adjointness", worst <= 1e-12, "max rel err " + fmt(worst)};
}

VerifyCheck check_conv_oracles(rng::Stream& stream) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t k = stream.uniform_int(1, 4);
        const int64_t s = stream.uniform_int(1, 2);
        const int64_t p = stream.uniform_int(0, 1);
        const int64_t c = stream.uniform_int(1, 2);
        const int64_t m = stream.uniform_int(1, 3);
        const int64_t h = k + s * stream.uniform_int(0, 3);
        const int64_t w = k + s * stream.uniform_int(0, 3);
        if ((h + 2 * p - k) % s != 0 || (w + 2 * p - k) % s != 0) continue;
        ConvSpec spec{k, c, m, p, s};
        const Tensor x = random_tensor({h, w, c}, stream);
        const Tensor kr = random_tensor({m, k, k, c}, stream);
        worst = std::max(worst, max_abs_diff(conv2d_gemm(x, kr, spec),
                                             ref::conv2d_direct(x, kr, spec)));
    }
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t k = stream.uniform_int(1, 3);
        const int64_t s = stream.uniform_int(1, 2);
        const int64_t p = stream.uniform_int(0, 1);
        const int64_t c = stream.uniform_int(1, 2);
        const int64_t m = stream.uniform_int(1, 2);
        const int64_t h = k + s * stream.uniform_int(0, 2);
        const int64_t w = k + s * stream.uniform_int(0, 2);
        const int64_t d = k + s * stream.uniform_int(0, 2);
        if ((h + 2 * p - k) % s != 0 || (w + 2 * p - k) % s != 0 || (d + 2 * p - k) % s != 0) {
            continue;
        }
        Conv3dSpec spec{k, c, m, p, s};
        const Tensor x = random_tensor({h, w, d, c}, stream);
        const Tensor kr = random_tensor({m, k, k, k, c}, stream);
        worst = std::max(worst, max_abs_diff(conv3d_forward(x, kr, spec),
                                             ref::conv3d_direct(x, kr, k, s, p)));
    }
    return {"GEMM convolution vs direct", worst <= 1e-12, "max abs diff " + fmt(worst)};
}

VerifyCheck check_conv3d_gradients(rng::Stream& stream) {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t k = stream.uniform_int(1, 2);
        const int64_t h = k + stream.uniform_int(0, 2);
        Conv3dSpec spec{k, 1, 1, 0, 1};
        const Tensor x = random_tensor({h, h, h, 1}, stream);
        const Tensor kr = random_tensor({1, k, k, k, 1}, stream);
        const Tensor g = random_tensor(conv3d_forward(x, kr, spec).shape(), stream);

        const Conv3dGrads grads = conv3d_backward(x, kr, g, spec);
        worst = std::max(worst, max_fd_error(x, grads.input, [&](const Tensor& probe) {
            return inner(conv3d_forward(probe, kr, spec), g);
        }));
        worst = std::max(worst, max_fd_error(kr, grads.kernels, [&](const Tensor& probe) {
            return inner(conv3d_forward(x, probe, spec), g);
        }));
    }
    return {"conv3d gradients vs finite differences", worst <= 1e-5, "max rel err " + fmt(worst)};
}

VerifyCheck check_loss_gradients(rng::Stream& stream) {
    double worst = 0.0;
    for (int trial = 0; trial < 15; ++trial) {
        const int64_t n = stream.uniform_int(2, 6);
        const Tensor pred = random_tensor({n, n}, stream);
        const Tensor target = random_tensor({n, n}, stream);
        const ValueGrad mse = loss_reconstruction(pred, target);
        worst = std::max(worst, max_fd_error(pred, mse.grad, [&](const Tensor& probe) {
            return loss_reconstruction(probe, target).value;
        }));

        const Tensor a = random_tensor({n}, stream);
        const Tensor b = random_tensor({n}, stream);
        const PairGrad fc = loss_feature_compare(a, b);
        worst = std::max(worst, max_fd_error(a, fc.grad_a, [&](const Tensor& probe) {
            return loss_feature_compare(probe, b).value;
        }));
        worst = std::max(worst, max_fd_error(b, fc.grad_b, [&](const Tensor& probe) {
            return loss_feature_compare(a, probe).value;
        }));
    }
    return {"loss gradients vs finite differences", worst <= 1e-5, "max rel err " + fmt(worst)};
}

VerifyCheck check_training(rng::Stream& stream) {
    MiniNet net = MiniNet::smoke_default(17);
    Tensor a = random_tensor({8, 8, 8}, stream, 0.0, 1.0);
    Tensor b = random_tensor({8, 8, 8}, stream, 0.0, 1.0);
    std::vector<std::pair<Tensor, Tensor>> pairs{{a, b}};

    const auto losses = train_smoke(net, pairs, 25, 0.05);
    if (!(losses.back() < losses.front())) {
        return {"training smoke descends", false,
                "first " + fmt(losses.front()) + " last " + fmt(losses.back())};
    }

    MiniNet frozen = MiniNet::smoke_default(17);
    const auto flat = train_smoke(frozen, pairs, 10, 0.0);
    for (double v : flat) {
        if (v != flat.front()) {
            return {"training smoke descends", false, "lr=0 trajectory moved"};
        }
    }
    std::ostringstream os;
    os << "loss " << fmt(losses.front()) << " -> " << fmt(losses.back()) << ", "
       << net.parameter_count() << " parameters";
    return {"training smoke descends", true, os.str()};
}

VerifyCheck check_augment_determinism(rng::Stream& stream) {
    const Tensor v = random_tensor({16, 16, 8}, stream, 0.0, 1.0);
    const AugmentSpec spec = AugmentSpec::standard(99);
    const Tensor once = augment_local(augment_global(v, spec, 3), spec, 3);
    const Tensor twice = augment_local(augment_global(v, spec, 3), spec, 3);
    if (!bitwise_equal(once, twice)) {
        return {"augmentation determinism", false, "repeat run diverged"};
    }
    const AugmentSpec id = AugmentSpec::identity(99);
    const Tensor same = augment_local(augment_global(v, id, 3), id, 3);
    if (!bitwise_equal(v, same)) {
        return {"augmentation determinism", false,
                "identity recipe drifted by " + fmt(max_abs_diff(v, same))};
    }
    return {"augmentation determinism", true, "repeat bitwise, identity exact"};
}

VerifyCheck check_resize_constants(rng::Stream& stream) {
    const double value = stream.uniform(0.1, 0.9);
    const Tensor img({13, 9}, value);
    const Tensor r2 = resize_bilinear(img, 224, 224);
    const Tensor vol({7, 9, 5}, value);
    const Tensor r3 = resize_trilinear(vol, 64, 64, 32);
    const bool ok = min_value(r2) == value && max_value(r2) == value &&
                    min_value(r3) == value && max_value(r3) == value;
    return {"resize preserves constants", ok, ok ? "bitwise" : "constant surface drifted"};
}

} // namespace

std::vector<VerifyCheck> run_verify(uint64_t seed) {
    auto stream = rng::Stream(rng::mix(seed, 0x766679));
    std::vector<VerifyCheck> checks;
    checks.push_back(check_matmul(stream));
    checks.push_back(check_shape_laws(stream));
    checks.push_back(check_correspondence(stream));
    checks.push_back(check_round_trip(stream));
    checks.push_back(check_adjointness(stream));
    checks.push_back(check_conv_oracles(stream));
    checks.push_back(check_conv3d_gradients(stream));
    checks.push_back(check_loss_gradients(stream));
    checks.push_back(check_training(stream));
    checks.push_back(check_augment_determinism(stream));
    checks.push_back(check_resize_constants(stream));
    return checks;
}

bool all_passed(const std::vector<VerifyCheck>& checks) {
    for (const auto& c : checks) {
        if (!c.pass) return false;
    }
    return true;
}

} // namespace p3d
