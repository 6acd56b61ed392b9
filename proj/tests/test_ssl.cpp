#include <doctest.h>

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "p3d/ssl.hpp"
#include "test_support.hpp"

using p3d::Conv3dSpec;
using p3d::MiniNet;
using p3d::Tensor;

TEST_CASE("3D convolution with a k=1 identity kernel") {
    std::mt19937_64 gen(71);
    Tensor x = testsup::random_tensor({4, 5, 3}, gen);
    Tensor kernel = Tensor::from_data({1, 1, 1, 1, 1}, {1.0});
    Tensor y = p3d::conv3d_forward(x, kernel, Conv3dSpec{1, 1, 1, 0, 1});
    CHECK(y.extent(0) == 4);
    CHECK(y.extent(1) == 5);
    CHECK(y.extent(2) == 3);
    CHECK(y.extent(3) == 1);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 5; ++j)
            for (int64_t d = 0; d < 3; ++d) {
                CHECK(y.at(i, j, d, 0) == x.at(i, j, d));
            }
}

TEST_CASE("3D convolution with zero kernels is zero") {
    std::mt19937_64 gen(72);
    Tensor x = testsup::random_tensor({5, 5, 4, 2}, gen);
    Tensor kernels({3, 3, 3, 3, 2}, 0.0);
    Tensor y = p3d::conv3d_forward(x, kernels, Conv3dSpec{3, 2, 3, 1, 1});
    CHECK(p3d::max_value(y) == 0.0);
    CHECK(p3d::min_value(y) == 0.0);
}

TEST_CASE("3D convolution matches the direct definition") {
    std::mt19937_64 gen(73);
    for (int trial = 0; trial < 25; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 3 + 1);
        const auto s = static_cast<int64_t>(gen() % 2 + 1);
        const auto p = static_cast<int64_t>(gen() % 2);
        const auto c = static_cast<int64_t>(gen() % 2 + 1);
        const auto m = static_cast<int64_t>(gen() % 2 + 1);
        const int64_t h = k + s * static_cast<int64_t>(gen() % 3);
        const int64_t w = k + s * static_cast<int64_t>(gen() % 3);
        const int64_t d = k + s * static_cast<int64_t>(gen() % 3);
        if ((h + 2 * p - k) % s != 0 || (w + 2 * p - k) % s != 0 || (d + 2 * p - k) % s != 0)
            continue;
        Conv3dSpec spec{k, c, m, p, s};
        Tensor x = testsup::random_tensor({h, w, d, c}, gen);
        Tensor kr = testsup::random_tensor({m, k, k, k, c}, gen);
        Tensor got = p3d::conv3d_forward(x, kr, spec);
        Tensor want = oracle::conv3d(x, kr, k, p, s);
        CHECK(p3d::same_shape(got, want));
        CHECK(p3d::max_abs_diff(got, want) <= 1e-12);
    }
}

TEST_CASE("conv3d rejects mis-shaped kernels") {
    Tensor x({4, 4, 4}, 0.0);
    CHECK_THROWS_AS(p3d::conv3d_forward(x, Tensor({1, 3, 3, 3}), Conv3dSpec{3, 1, 1, 0, 1}),
                    p3d::DimensionError);
    CHECK_THROWS_AS(p3d::conv3d_forward(x, Tensor({1, 3, 3, 3, 2}), Conv3dSpec{3, 1, 1, 0, 1}),
                    p3d::DimensionError);
}

TEST_CASE("col2im3d is the adjoint of im2col3d") {
    std::mt19937_64 gen(74);
    for (int trial = 0; trial < 25; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 3 + 1);
        const auto p = static_cast<int64_t>(gen() % 2);
        const auto c = static_cast<int64_t>(gen() % 2 + 1);
        const int64_t h = k + static_cast<int64_t>(gen() % 3);
        const int64_t w = k + static_cast<int64_t>(gen() % 3);
        const int64_t d = k + static_cast<int64_t>(gen() % 3);
        Conv3dSpec spec{k, c, 1, p, 1};
        Tensor x = testsup::random_tensor({h, w, d, c}, gen);
        Tensor cx = p3d::im2col3d(x, spec);
        Tensor y = testsup::random_tensor(cx.shape(), gen);
        const double lhs = oracle::inner(cx, y);
        const double rhs = oracle::inner(x, p3d::col2im3d(y, h, w, d, spec));
        CHECK(oracle::rel_err(lhs, rhs) <= 1e-12);
    }
}

TEST_CASE("conv3d gradients match finite differences") {
    std::mt19937_64 gen(75);
    for (int trial = 0; trial < 5; ++trial) {
        Conv3dSpec spec{3, 1, 2, 1, 1};
        Tensor x = testsup::random_tensor({4, 4, 3}, gen);
        Tensor kr = testsup::random_tensor({2, 3, 3, 3, 1}, gen);
        Tensor g = testsup::random_tensor({4, 4, 3, 2}, gen);

        auto grads = p3d::conv3d_backward(x, kr, g, spec);
        CHECK(p3d::same_shape(grads.input, x));
        CHECK(p3d::same_shape(grads.kernels, kr));

        // Scalar objective <conv(x, kr), g>: its gradient in x is
        // grads.input and in kr is grads.kernels.
        auto obj_x = [&](const Tensor& xv) {
            return oracle::inner(p3d::conv3d_forward(xv, kr, spec), g);
        };
        auto obj_k = [&](const Tensor& kv) {
            return oracle::inner(p3d::conv3d_forward(x, kv, spec), g);
        };
        for (int64_t i = 0; i < x.size(); i += 7) {
            const double fd = oracle::central_diff(obj_x, x, i);
            CHECK(oracle::rel_err(fd, grads.input[i]) <= 1e-5);
        }
        for (int64_t i = 0; i < kr.size(); i += 5) {
            const double fd = oracle::central_diff(obj_k, kr, i);
            CHECK(oracle::rel_err(fd, grads.kernels[i]) <= 1e-5);
        }
    }
}

TEST_CASE("conv3d backward is linear in the upstream gradient") {
    std::mt19937_64 gen(76);
    Conv3dSpec spec{3, 1, 1, 1, 1};
    Tensor x = testsup::random_tensor({4, 4, 4}, gen);
    Tensor kr = testsup::random_tensor({1, 3, 3, 3, 1}, gen);
    Tensor g = testsup::random_tensor({4, 4, 4, 1}, gen);

    auto g2 = p3d::conv3d_backward(x, kr, p3d::scale(g, 2.0), spec);
    auto g1 = p3d::conv3d_backward(x, kr, g, spec);
    CHECK(p3d::max_abs_diff(g2.input, p3d::scale(g1.input, 2.0)) <= 1e-12);
    CHECK(p3d::max_abs_diff(g2.kernels, p3d::scale(g1.kernels, 2.0)) <= 1e-12);

    auto gz = p3d::conv3d_backward(x, kr, Tensor({4, 4, 4, 1}, 0.0), spec);
    CHECK(p3d::max_value(gz.input) == 0.0);
    CHECK(p3d::min_value(gz.input) == 0.0);
    CHECK(p3d::max_value(gz.kernels) == 0.0);
}

TEST_CASE("reconstruction loss value and gradient") {
    Tensor p = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor t = Tensor::from_data({2, 2}, {1.0, 1.0, 1.0, 1.0});
    auto vg = p3d::loss_reconstruction(p, t);
    // ((0)^2 + 1^2 + 2^2 + 3^2) / 4 = 3.5
    CHECK(vg.value == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(vg.grad[0] == doctest::Approx(0.0));
    CHECK(vg.grad[1] == doctest::Approx(0.5));
    CHECK(vg.grad[2] == doctest::Approx(1.0));
    CHECK(vg.grad[3] == doctest::Approx(1.5));

    CHECK(p3d::loss_reconstruction(t, t).value == 0.0);
    CHECK_THROWS_AS(p3d::loss_reconstruction(p, Tensor({2, 3})), p3d::DimensionError);
}

TEST_CASE("reconstruction loss gradient matches finite differences") {
    std::mt19937_64 gen(77);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor p = testsup::random_tensor({3, 4, 2}, gen);
        Tensor t = testsup::random_tensor({3, 4, 2}, gen);
        auto vg = p3d::loss_reconstruction(p, t);
        auto f = [&](const Tensor& pv) { return p3d::loss_reconstruction(pv, t).value; };
        for (int64_t i = 0; i < p.size(); i += 3) {
            CHECK(oracle::rel_err(oracle::central_diff(f, p, i), vg.grad[i]) <= 1e-5);
        }
    }
}

TEST_CASE("feature comparison loss at the extremes") {
    Tensor a = Tensor::from_data({3}, {1.0, 0.0, 2.0});
    auto same = p3d::loss_feature_compare(a, p3d::scale(a, 3.0));
    CHECK(same.value == doctest::Approx(0.0).epsilon(1e-15));

    Tensor b = Tensor::from_data({3}, {0.0, 5.0, 0.0});
    auto ortho = p3d::loss_feature_compare(a, b);
    CHECK(ortho.value == doctest::Approx(1.0).epsilon(1e-15));

    auto opposite = p3d::loss_feature_compare(a, p3d::scale(a, -1.0));
    CHECK(opposite.value == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("feature comparison loss is scale-invariant") {
    std::mt19937_64 gen(78);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = testsup::random_tensor({8}, gen);
        Tensor b = testsup::random_tensor({8}, gen);
        const double base = p3d::loss_feature_compare(a, b).value;
        const double scaled = p3d::loss_feature_compare(p3d::scale(a, 7.5), p3d::scale(b, 0.25)).value;
        CHECK(std::abs(base - scaled) <= 1e-12);
    }
}

TEST_CASE("feature comparison loss rejects degenerate inputs") {
    Tensor a = Tensor::from_data({3}, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(p3d::loss_feature_compare(a, Tensor({3}, 0.0)), p3d::DegenerateInputError);
    CHECK_THROWS_AS(p3d::loss_feature_compare(Tensor({3}, 0.0), a), p3d::DegenerateInputError);
    CHECK_THROWS_AS(p3d::loss_feature_compare(Tensor({1}, 1.0), Tensor({1}, 1.0)),
                    p3d::DimensionError);
    CHECK_THROWS_AS(p3d::loss_feature_compare(a, Tensor({4}, 1.0)), p3d::DimensionError);
}

TEST_CASE("feature comparison gradients match finite differences") {
    std::mt19937_64 gen(79);
    for (int trial = 0; trial < 8; ++trial) {
        Tensor a = testsup::random_tensor({6}, gen, 0.5, 1.5);
        Tensor b = testsup::random_tensor({6}, gen, 0.5, 1.5);
        auto pg = p3d::loss_feature_compare(a, b);
        auto fa = [&](const Tensor& av) { return p3d::loss_feature_compare(av, b).value; };
        auto fb = [&](const Tensor& bv) { return p3d::loss_feature_compare(a, bv).value; };
        for (int64_t i = 0; i < 6; ++i) {
            CHECK(oracle::rel_err(oracle::central_diff(fa, a, i), pg.grad_a[i]) <= 1e-5);
            CHECK(oracle::rel_err(oracle::central_diff(fb, b, i), pg.grad_b[i]) <= 1e-5);
        }
    }
}

TEST_CASE("smoke net structure is stable") {
    MiniNet net = MiniNet::smoke_default(5);
    CHECK_NOTHROW(net.validate());
    CHECK(net.layers.size() == 3);
    CHECK(net.parameter_count() == 108);
    CHECK(net.feature_tap == 0);

    // Same seed, same weights; different seed, different weights.
    MiniNet again = MiniNet::smoke_default(5);
    MiniNet other = MiniNet::smoke_default(6);
    auto* c1 = std::get_if<p3d::Conv3dLayer>(&net.layers[0]);
    auto* c2 = std::get_if<p3d::Conv3dLayer>(&again.layers[0]);
    auto* c3 = std::get_if<p3d::Conv3dLayer>(&other.layers[0]);
    REQUIRE(c1 != nullptr);
    REQUIRE(c2 != nullptr);
    REQUIRE(c3 != nullptr);
    CHECK(p3d::bitwise_equal(c1->kernels, c2->kernels));
    CHECK_FALSE(p3d::bitwise_equal(c1->kernels, c3->kernels));

    // Init bound: fan-in = 27 for the first conv.
    CHECK(p3d::max_value(c1->kernels) <= 1.0 / std::sqrt(27.0));
    CHECK(p3d::min_value(c1->kernels) >= -1.0 / std::sqrt(27.0));
}

TEST_CASE("forward pass shapes chain through the smoke net") {
    std::mt19937_64 gen(80);
    MiniNet net = MiniNet::smoke_default(7);
    for (auto shape : {std::vector<int64_t>{8, 8, 8}, std::vector<int64_t>{6, 5, 4}}) {
        Tensor x = testsup::random_tensor(shape, gen);
        auto trace = p3d::net_forward(net, x);
        CHECK(trace.output.extent(0) == shape[0]);
        CHECK(trace.output.extent(1) == shape[1]);
        CHECK(trace.output.extent(2) == shape[2]);
        CHECK(trace.output.extent(3) == 1);
        CHECK(trace.features.rank() == 1);
        CHECK(trace.features.extent(0) == 2);
        CHECK(trace.inputs.size() == net.layers.size() + 1);
        CHECK(p3d::all_finite(trace.output));
    }
}

TEST_CASE("pool and upsample layers compute the stated maps") {
    std::mt19937_64 gen(81);
    Tensor x = testsup::random_tensor({4, 4, 4}, gen);

    MiniNet pool_net;
    pool_net.layers = {p3d::AvgPoolLayer{}};
    auto pooled = p3d::net_forward(pool_net, x).output;
    CHECK(pooled.extent(0) == 2);
    CHECK(pooled.extent(1) == 2);
    CHECK(pooled.extent(2) == 2);
    double want = 0.0;
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j)
            for (int64_t d = 0; d < 2; ++d) want += x.at(i, j, d);
    CHECK(pooled.at(0, 0, 0, 0) == doctest::Approx(want / 8.0).epsilon(1e-15));

    MiniNet up_net;
    up_net.layers = {p3d::UpsampleLayer{}};
    auto up = p3d::net_forward(up_net, x).output;
    CHECK(up.extent(0) == 8);
    CHECK(up.extent(1) == 8);
    CHECK(up.extent(2) == 8);
    CHECK(up.at(5, 4, 3, 0) == x.at(2, 2, 1));

    // Odd extents cannot be mean-pooled.
    Tensor odd({3, 4, 4}, 1.0);
    CHECK_THROWS_AS(p3d::net_forward(pool_net, odd), p3d::DimensionError);
}

TEST_CASE("whole-net gradients match finite differences") {
    std::mt19937_64 gen(82);
    MiniNet net = MiniNet::smoke_default(9);
    // Widen the net with pool/upsample to cover their backward paths.
    net.layers.insert(net.layers.begin() + 1, p3d::AvgPoolLayer{});
    net.layers.insert(net.layers.begin() + 2, p3d::UpsampleLayer{});
    CHECK_NOTHROW(net.validate());

    Tensor x = testsup::random_tensor({4, 4, 4}, gen);
    Tensor target = testsup::random_tensor({4, 4, 4, 1}, gen);

    auto loss_of = [&](const MiniNet& n) {
        auto trace = p3d::net_forward(n, x);
        return p3d::loss_reconstruction(trace.output, target).value +
               0.5 * p3d::mean_value(trace.features);
    };

    auto trace = p3d::net_forward(net, x);
    auto rec = p3d::loss_reconstruction(trace.output, target);
    Tensor grad_features(trace.features.shape(), 0.5 / static_cast<double>(trace.features.size()));
    auto grads = p3d::net_backward(net, trace, rec.grad, grad_features);

    for (size_t li = 0; li < net.layers.size(); ++li) {
        auto* conv = std::get_if<p3d::Conv3dLayer>(&net.layers[li]);
        if (conv == nullptr) {
            CHECK(grads.params[li].size() == 0);
            continue;
        }
        for (int64_t i = 0; i < conv->kernels.size(); i += 11) {
            MiniNet bumped = net;
            auto* bk = std::get_if<p3d::Conv3dLayer>(&bumped.layers[li]);
            const double h = 1e-5;
            const double saved = bk->kernels[i];
            bk->kernels[i] = saved + h;
            const double up_val = loss_of(bumped);
            bk->kernels[i] = saved - h;
            const double dn_val = loss_of(bumped);
            const double fd = (up_val - dn_val) / (2.0 * h);
            CHECK(oracle::rel_err(fd, grads.params[li][i]) <= 1e-4);
        }
    }

    auto input_obj = [&](const Tensor& xv) {
        auto tr = p3d::net_forward(net, xv);
        return p3d::loss_reconstruction(tr.output, target).value +
               0.5 * p3d::mean_value(tr.features);
    };
    for (int64_t i = 0; i < x.size(); i += 13) {
        const double fd = oracle::central_diff(input_obj, x, i);
        CHECK(oracle::rel_err(fd, grads.input[i]) <= 1e-4);
    }
}

TEST_CASE("training descends and lr = 0 is exactly inert") {
    std::mt19937_64 gen(83);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 2; ++i) {
        pairs.emplace_back(testsup::random_tensor({6, 6, 6}, gen, 0.0, 1.0),
                           testsup::random_tensor({6, 6, 6}, gen, 0.0, 1.0));
    }

    MiniNet net = MiniNet::smoke_default(11);
    auto losses = p3d::train_smoke(net, pairs, 30, 0.05);
    REQUIRE(losses.size() == 30);
    CHECK(losses.back() < losses.front());
    for (double v : losses) CHECK(std::isfinite(v));

    // Re-running from the same seed replays the same losses bit for bit.
    MiniNet net2 = MiniNet::smoke_default(11);
    auto losses2 = p3d::train_smoke(net2, pairs, 30, 0.05);
    for (size_t i = 0; i < losses.size(); ++i) CHECK(losses[i] == losses2[i]);

    // lr = 0: constant losses, weights untouched.
    MiniNet frozen = MiniNet::smoke_default(11);
    MiniNet pristine = MiniNet::smoke_default(11);
    auto flat = p3d::train_smoke(frozen, pairs, 5, 0.0);
    for (double v : flat) CHECK(v == flat[0]);
    auto* w0 = std::get_if<p3d::Conv3dLayer>(&frozen.layers[0]);
    auto* w1 = std::get_if<p3d::Conv3dLayer>(&pristine.layers[0]);
    REQUIRE(w0 != nullptr);
    REQUIRE(w1 != nullptr);
    CHECK(p3d::bitwise_equal(w0->kernels, w1->kernels));
}

TEST_CASE("a non-finite loss aborts training and names the step") {
    // Inputs this large overflow the squared-error sum on the first step.
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.emplace_back(Tensor({6, 6, 6}, 1e200), Tensor({6, 6, 6}, 1e200));
    MiniNet net = MiniNet::smoke_default(13);
    try {
        p3d::train_smoke(net, pairs, 3, 0.01);
        FAIL("expected a training error");
    } catch (const p3d::TrainingError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("empty nets and bad taps are rejected") {
    MiniNet net;
    CHECK_THROWS_AS(net.validate(), p3d::ConfigError);
    net.layers = {p3d::ReluLayer{}};
    net.feature_tap = 3;
    CHECK_THROWS_AS(net.validate(), p3d::ConfigError);
    net.feature_tap = 0;
    CHECK_NOTHROW(net.validate());
    CHECK(net.parameter_count() == 0);
    CHECK_THROWS_AS(p3d::train_smoke(net, {}, 3, 0.1), p3d::ConfigError);
}
