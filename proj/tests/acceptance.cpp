// Integration gate: one line per criterion, exit 0 only when every
// criterion holds. Values are checked against independent definitional
// oracles (see oracles.hpp) or exact identities, with the tolerances
// stated in each line.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "p3d/augment.hpp"
#include "p3d/dataset.hpp"
#include "p3d/im2col.hpp"
#include "p3d/pseudo3d.hpp"
#include "p3d/ssl.hpp"
#include "p3d/tensor_io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using p3d::ConvSpec;
using p3d::P3DConfig;
using p3d::Tensor;

namespace {

struct Failure : std::runtime_error {
    explicit Failure(const std::string& msg) : std::runtime_error(msg) {}
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

// ---------------------------------------------------------------- criteria

std::string check_shape_laws() {
    std::mt19937_64 gen(1001);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 7 + 1);
        const auto s = static_cast<int64_t>(gen() % 3 + 1);
        // Padding below half the window keeps the unpadded extent >= 1.
        const auto p = static_cast<int64_t>(gen() % static_cast<uint64_t>((k + 1) / 2));
        const auto c = static_cast<int64_t>(gen() % 3 + 1);
        const auto oh = static_cast<int64_t>(gen() % 5 + 1);
        const auto ow = static_cast<int64_t>(gen() % 5 + 1);
        const int64_t h = k + (oh - 1) * s - 2 * p;
        const int64_t w = k + (ow - 1) * s - 2 * p;

        Tensor img = testsup::random_tensor({h, w, c}, gen);
        Tensor cols = p3d::im2col(img, ConvSpec{k, c, 1, p, s});
        require(cols.rank() == 2 && cols.extent(0) == k * k * c && cols.extent(1) == oh * ow,
                "patch matrix shape is off at trial " + std::to_string(trial));

        const int64_t h2 = k + (oh - 1) * s;
        const int64_t w2 = k + (ow - 1) * s;
        Tensor flat = testsup::random_tensor({h2, w2}, gen);
        Tensor vol = p3d::to_pseudo3d(flat, P3DConfig{k, s});
        require(vol.rank() == 3 && vol.extent(0) == oh && vol.extent(1) == ow &&
                    vol.extent(2) == k * k,
                "volume shape is off at trial " + std::to_string(trial));
    }
    return "1000 random (H,W,k,s,P,C) draws";
}

std::string check_correspondence() {
    std::mt19937_64 gen(1002);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 6 + 1);
        const auto s = static_cast<int64_t>(gen() % 3 + 1);
        const int64_t h = k + s * static_cast<int64_t>(gen() % 6);
        const int64_t w = k + s * static_cast<int64_t>(gen() % 6);
        Tensor img = testsup::random_tensor({h, w}, gen);
        Tensor vol = p3d::to_pseudo3d(img, P3DConfig{k, s});
        Tensor cols = p3d::im2col(img, ConvSpec{k, 1, 1, 0, s});
        require(p3d::bitwise_equal(p3d::fibers_as_columns(vol), cols),
                "volume fibers differ from patch columns at trial " + std::to_string(trial));
    }
    return "200 cases, bitwise";
}

std::string check_conv_oracles() {
    std::mt19937_64 gen(1003);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 5 + 1);
        const auto s = static_cast<int64_t>(gen() % 2 + 1);
        const auto p = static_cast<int64_t>(gen() % 2);
        const auto c = static_cast<int64_t>(gen() % 3 + 1);
        const auto m = static_cast<int64_t>(gen() % 3 + 1);
        // Extents stay at or below 5 + 2*4 = 13.
        const int64_t h = k + s * static_cast<int64_t>(gen() % 5);
        const int64_t w = k + s * static_cast<int64_t>(gen() % 5);
        ConvSpec spec{k, c, m, p, s};
        Tensor x = testsup::random_tensor({h, w, c}, gen);
        Tensor kr = testsup::random_tensor({m, k, k, c}, gen);
        const double diff = p3d::max_abs_diff(p3d::conv2d_gemm(x, kr, spec),
                                              oracle::conv2d(x, kr, k, p, s));
        require(diff <= 1e-12, "2D lowering differs from direct convolution by " +
                                   std::to_string(diff) + " at trial " + std::to_string(trial));
    }
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 4 + 1);
        const auto s = static_cast<int64_t>(gen() % 2 + 1);
        const auto p = static_cast<int64_t>(gen() % 2);
        const auto c = static_cast<int64_t>(gen() % 2 + 1);
        const auto m = static_cast<int64_t>(gen() % 2 + 1);
        const int64_t h = k + s * static_cast<int64_t>(gen() % 3);
        const int64_t w = k + s * static_cast<int64_t>(gen() % 3);
        const int64_t d = k + s * static_cast<int64_t>(gen() % 3);
        p3d::Conv3dSpec spec{k, c, m, p, s};
        Tensor x = testsup::random_tensor({h, w, d, c}, gen);
        Tensor kr = testsup::random_tensor({m, k, k, k, c}, gen);
        const double diff = p3d::max_abs_diff(p3d::conv3d_forward(x, kr, spec),
                                              oracle::conv3d(x, kr, k, p, s));
        require(diff <= 1e-12, "3D lowering differs from direct convolution by " +
                                   std::to_string(diff) + " at trial " + std::to_string(trial));
    }
    return "200 cases each, within 1e-12";
}

std::string check_round_trip() {
    std::mt19937_64 gen(1004);
    int images = 0;
    while (images < 200) {
        for (int64_t k : {1, 3, 5, 7}) {
            for (int64_t s : {1, 2, 3}) {
                if (s > k || images >= 200) continue;
                const int64_t h = k + s * static_cast<int64_t>(gen() % 6 + 1);
                const int64_t w = k + s * static_cast<int64_t>(gen() % 6 + 1);
                Tensor img = testsup::random_tensor({h, w}, gen);
                const P3DConfig cfg{k, s};
                Tensor back = p3d::from_pseudo3d(p3d::to_pseudo3d(img, cfg), cfg, h, w);
                require(p3d::bitwise_equal(back, img),
                        "round trip is inexact for k=" + std::to_string(k) +
                            ", s=" + std::to_string(s));
                ++images;
            }
        }
    }
    return "200 images, k in {1,3,5,7} x s in {1,2,3}, exact";
}

std::string check_gradients() {
    std::mt19937_64 gen(1005);

    for (int trial = 0; trial < 100; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 3 + 1);
        const auto c = static_cast<int64_t>(gen() % 2 + 1);
        const auto m = static_cast<int64_t>(gen() % 2 + 1);
        const auto p = static_cast<int64_t>(gen() % 2);
        const int64_t h = k + static_cast<int64_t>(gen() % 3);
        const int64_t w = k + static_cast<int64_t>(gen() % 3);
        const int64_t d = k + static_cast<int64_t>(gen() % 3);
        p3d::Conv3dSpec spec{k, c, m, p, 1};
        Tensor x = testsup::random_tensor({h, w, d, c}, gen);
        Tensor kr = testsup::random_tensor({m, k, k, k, c}, gen);
        const auto oh = (h + 2 * p - k) + 1;
        const auto ow = (w + 2 * p - k) + 1;
        const auto od = (d + 2 * p - k) + 1;
        Tensor g = testsup::random_tensor({oh, ow, od, m}, gen);
        auto grads = p3d::conv3d_backward(x, kr, g, spec);

        auto obj_x = [&](const Tensor& xv) {
            return oracle::inner(p3d::conv3d_forward(xv, kr, spec), g);
        };
        auto obj_k = [&](const Tensor& kv) {
            return oracle::inner(p3d::conv3d_forward(x, kv, spec), g);
        };
        for (int probe = 0; probe < 3; ++probe) {
            const auto xi = static_cast<int64_t>(gen() % static_cast<uint64_t>(x.size()));
            const auto ki = static_cast<int64_t>(gen() % static_cast<uint64_t>(kr.size()));
            const double fdx = oracle::central_diff(obj_x, x, xi);
            const double fdk = oracle::central_diff(obj_k, kr, ki);
            require(oracle::rel_err(fdx, grads.input[xi]) <= 1e-5,
                    "conv input gradient misses finite differences at trial " +
                        std::to_string(trial));
            require(oracle::rel_err(fdk, grads.kernels[ki]) <= 1e-5,
                    "conv kernel gradient misses finite differences at trial " +
                        std::to_string(trial));
        }
    }

    for (int trial = 0; trial < 100; ++trial) {
        Tensor pred = testsup::random_tensor({3, 3, 2}, gen);
        Tensor target = testsup::random_tensor({3, 3, 2}, gen);
        auto vg = p3d::loss_reconstruction(pred, target);
        auto f = [&](const Tensor& pv) { return p3d::loss_reconstruction(pv, target).value; };
        for (int probe = 0; probe < 4; ++probe) {
            const auto i = static_cast<int64_t>(gen() % static_cast<uint64_t>(pred.size()));
            require(oracle::rel_err(oracle::central_diff(f, pred, i), vg.grad[i]) <= 1e-5,
                    "squared-error gradient misses finite differences at trial " +
                        std::to_string(trial));
        }
    }

    for (int trial = 0; trial < 100; ++trial) {
        Tensor a = testsup::random_tensor({6}, gen, 0.25, 1.25);
        Tensor b = testsup::random_tensor({6}, gen, 0.25, 1.25);
        auto pg = p3d::loss_feature_compare(a, b);
        auto fa = [&](const Tensor& av) { return p3d::loss_feature_compare(av, b).value; };
        auto fb = [&](const Tensor& bv) { return p3d::loss_feature_compare(a, bv).value; };
        for (int64_t i = 0; i < 6; ++i) {
            require(oracle::rel_err(oracle::central_diff(fa, a, i), pg.grad_a[i]) <= 1e-5,
                    "feature gradient (left) misses finite differences at trial " +
                        std::to_string(trial));
            require(oracle::rel_err(oracle::central_diff(fb, b, i), pg.grad_b[i]) <= 1e-5,
                    "feature gradient (right) misses finite differences at trial " +
                        std::to_string(trial));
        }
    }
    return "100 instances per op, relative error <= 1e-5";
}

std::string check_adjointness() {
    std::mt19937_64 gen(1006);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<int64_t>(gen() % 5 + 1);
        const auto s = static_cast<int64_t>(gen() % 2 + 1);
        const auto p = static_cast<int64_t>(gen() % 3);
        const auto c = static_cast<int64_t>(gen() % 3 + 1);
        const int64_t h = k + s * static_cast<int64_t>(gen() % 5);
        const int64_t w = k + s * static_cast<int64_t>(gen() % 5);
        ConvSpec spec{k, c, 1, p, s};
        Tensor x = testsup::random_tensor({h, w, c}, gen);
        Tensor cx = p3d::im2col(x, spec);
        Tensor y = testsup::random_tensor(cx.shape(), gen);
        const double lhs = oracle::inner(cx, y);
        const double rhs = oracle::inner(x, p3d::col2im(y, h, w, spec));
        require(oracle::rel_err(lhs, rhs) <= 1e-12,
                "pairings differ at trial " + std::to_string(trial));
    }
    return "200 cases, within 1e-12";
}

// Shared by criteria 7 and 8: a small mixed corpus on disk.
fs::path build_corpus(const fs::path& root, int n2d, int n3d, uint64_t seed) {
    std::mt19937_64 gen(seed);
    fs::create_directories(root);
    for (int i = 0; i < n2d; ++i) {
        p3d::save_pgm(root / ("img_" + std::to_string(i) + ".pgm"),
                      testsup::random_tensor({96, 96}, gen, 0.0, 1.0));
    }
    for (int i = 0; i < n3d; ++i) {
        p3d::save_tensor(root / ("vol_" + std::to_string(i)),
                         testsup::random_tensor({72, 64, 36}, gen, -200.0, 800.0));
    }
    return root;
}

std::vector<std::pair<std::string, std::string>> dir_bytes(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        files.emplace_back(entry.path().filename().string(), testsup::read_file(entry.path()));
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::string check_pipeline_determinism() {
    require(!testsup::cli_bin().empty(), "no CLI binary path was provided");
    testsup::TempDir tmp;
    fs::path corpus = build_corpus(tmp.path() / "corpus", 5, 5, 2001);

    p3d::BatchPlan plan;
    plan.batch_size = 2;
    plan.epoch_length = 3;
    plan.mix_ratio = 0.5;
    plan.seed = 77;
    plan.save(tmp.path() / "plan.json");

    const std::string common = "batch --manifest " + corpus.string() + " --plan " +
                               (tmp.path() / "plan.json").string() + " --quiet";
    struct Run {
        const char* name;
        const char* threads;
    };
    for (const Run run : {Run{"a", "1"}, Run{"b", "1"}, Run{"c", "4"}}) {
        auto r = testsup::run_cli(common + " --out-dir " + (tmp.path() / run.name).string() +
                                  " --threads " + run.threads);
        require(r.exit_code == 0, std::string("batch run failed:\n") + r.output);
    }

    // 6 view pairs -> 12 tensors -> 24 raw+header files, plus the audit.
    const auto a = dir_bytes(tmp.path() / "a");
    const auto b = dir_bytes(tmp.path() / "b");
    const auto c = dir_bytes(tmp.path() / "c");
    require(a.size() == 25, "expected 25 output files, got " + std::to_string(a.size()));
    require(a == b, "repeated runs differ");
    require(a == c, "thread counts 1 and 4 differ");
    return "6 view pairs, byte-identical across runs and threads 1 vs 4";
}

std::string check_mixing_arithmetic() {
    testsup::TempDir tmp;
    fs::path corpus = build_corpus(tmp.path() / "corpus", 3, 3, 2002);
    p3d::CorpusManifest manifest = p3d::CorpusManifest::scan(corpus);

    p3d::BatchPlan plan;
    plan.batch_size = 4;
    plan.epoch_length = 10;
    plan.mix_ratio = 0.5;
    plan.seed = 31;

    auto descriptors = p3d::plan_epoch(manifest, plan);
    require(descriptors.size() == 40, "epoch size is " + std::to_string(descriptors.size()));
    int64_t n2d = 0;
    int64_t n3d = 0;
    for (const auto& d : descriptors) {
        (d.kind == p3d::Kind::Image2D ? n2d : n3d) += 1;
    }
    require(n2d == 20 && n3d == 20, "mix is " + std::to_string(n2d) + "+" + std::to_string(n3d));

    plan.mix_ratio = 0.0;
    for (const auto& d : p3d::plan_epoch(manifest, plan)) {
        require(d.kind == p3d::Kind::Volume3D, "mix 0 scheduled a 2D item");
    }
    plan.mix_ratio = 1.0;
    for (const auto& d : p3d::plan_epoch(manifest, plan)) {
        require(d.kind == p3d::Kind::Image2D, "mix 1 scheduled a 3D item");
    }

    // The written audit agrees with the in-memory plan.
    plan.mix_ratio = 0.5;
    auto result = p3d::run_batch(manifest, plan, tmp.path() / "out");
    require(result.samples_written == 40, "materialized " +
                                              std::to_string(result.samples_written) + " of 40");
    auto audit = nlohmann::json::parse(testsup::read_file(tmp.path() / "out" / "schedule.json"));
    int64_t audit_2d = 0;
    int64_t audit_3d = 0;
    for (const auto& row : audit["samples"]) {
        (row["kind"] == "2d" ? audit_2d : audit_3d) += 1;
    }
    require(audit_2d == 20 && audit_3d == 20,
            "audit counts are " + std::to_string(audit_2d) + "+" + std::to_string(audit_3d));
    return "20+20 descriptors, pure at 0 and 1, audit agrees";
}

std::string check_cli_smoke() {
    require(!testsup::cli_bin().empty(), "no CLI binary path was provided");
    testsup::TempDir tmp;
    std::mt19937_64 gen(2003);
    p3d::save_tensor(tmp.path() / "img", testsup::random_tensor({224, 224}, gen, 0.0, 1.0));
    const std::string input = (tmp.path() / "img.bin").string();

    auto r1 = testsup::run_cli("transform --input " + input + " --output " +
                               (tmp.path() / "vol").string() + " --quiet");
    require(r1.exit_code == 0, "transform failed:\n" + r1.output);
    Tensor vol = p3d::load_tensor(tmp.path() / "vol");
    require(vol.extent(0) == 220 && vol.extent(1) == 220 && vol.extent(2) == 25,
            "224x224 transformed to " + std::to_string(vol.extent(0)) + "x" +
                std::to_string(vol.extent(1)) + "x" + std::to_string(vol.extent(2)));

    auto r2 = testsup::run_cli("transform --input " + input + " --output " +
                               (tmp.path() / "model").string() + " --target 64,64,32 --quiet");
    require(r2.exit_code == 0, "targeted transform failed:\n" + r2.output);
    Tensor model = p3d::load_tensor(tmp.path() / "model");
    require(model.extent(0) == 64 && model.extent(1) == 64 && model.extent(2) == 32,
            "target shape came out as " + std::to_string(model.extent(0)) + "x" +
                std::to_string(model.extent(1)) + "x" + std::to_string(model.extent(2)));

    auto r3 = testsup::run_cli("verify --quiet");
    require(r3.exit_code == 0, "verify exited " + std::to_string(r3.exit_code) + ":\n" + r3.output);
    return "220x220x25, 64x64x32, verify exit 0";
}

std::string check_training_smoke() {
    std::mt19937_64 gen(2004);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.emplace_back(testsup::random_tensor({8, 8, 8}, gen, 0.0, 1.0),
                       testsup::random_tensor({8, 8, 8}, gen, 0.0, 1.0));

    p3d::MiniNet net = p3d::MiniNet::smoke_default(17);
    auto losses = p3d::train_smoke(net, pairs, 50, 0.05);
    require(losses.size() == 50, "expected 50 per-step losses");
    require(losses.back() < losses.front(),
            "loss did not decrease: " + std::to_string(losses.front()) + " -> " +
                std::to_string(losses.back()));

    p3d::MiniNet net2 = p3d::MiniNet::smoke_default(17);
    auto losses2 = p3d::train_smoke(net2, pairs, 50, 0.05);
    for (size_t i = 0; i < losses.size(); ++i) {
        require(losses[i] == losses2[i], "losses diverge at step " + std::to_string(i));
    }
    return "50 steps, final < initial, bit-reproducible";
}

} // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--cli") {
            ::setenv("P3D_CLI_BIN", argv[i + 1], 1);
        }
    }

    struct Criterion {
        std::string label;
        double time_limit_s; // 0 = untimed
        std::function<std::string()> run;
    };
    const std::vector<Criterion> criteria{
        {"shape laws", 10.0, check_shape_laws},
        {"patch-matrix correspondence", 0.0, check_correspondence},
        {"convolution oracles", 0.0, check_conv_oracles},
        {"round trip", 0.0, check_round_trip},
        {"gradient suite", 60.0, check_gradients},
        {"adjointness", 0.0, check_adjointness},
        {"pipeline determinism", 0.0, check_pipeline_determinism},
        {"mixing arithmetic", 0.0, check_mixing_arithmetic},
        {"end-to-end smoke", 30.0, check_cli_smoke},
        {"training smoke", 0.0, check_training_smoke},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto& criterion = criteria[i];
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool pass = true;
        try {
            detail = criterion.run();
        } catch (const std::exception& e) {
            pass = false;
            detail = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (pass && criterion.time_limit_s > 0.0 && elapsed > criterion.time_limit_s) {
            pass = false;
            detail = "exceeded the " + std::to_string(criterion.time_limit_s) + " s budget";
        }
        std::printf("[%s] %2zu. %s (%s; %.2f s)\n", pass ? "PASS" : "FAIL", i + 1,
                    criterion.label.c_str(), detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!pass) ++failures;
    }

    if (failures == 0) {
        std::printf("all %zu criteria passed\n", criteria.size());
        return 0;
    }
    std::printf("%d of %zu criteria FAILED\n", failures, criteria.size());
    return 1;
}
