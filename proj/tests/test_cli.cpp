#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include <json.hpp>

#include "p3d/dataset.hpp"
#include "p3d/tensor_io.hpp"
#include "test_support.hpp"

// End-to-end checks against the installed binary. The binary path comes
// from P3D_CLI_BIN (set by the test harness); without it the cases are
// skipped rather than failed so the library suite can run standalone.

namespace fs = std::filesystem;
using p3d::Tensor;

#define REQUIRE_CLI()                                            \
    do {                                                         \
        if (testsup::cli_bin().empty()) {                        \
            MESSAGE("P3D_CLI_BIN not set; skipping");            \
            return;                                              \
        }                                                        \
    } while (0)

TEST_CASE("transform converts an image to a volume with the stated shape") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(91);
    p3d::save_tensor(tmp.path() / "img", testsup::random_tensor({224, 224}, gen, 0.0, 1.0));

    auto r = testsup::run_cli("transform --input " + (tmp.path() / "img.bin").string() +
                              " --output " + (tmp.path() / "vol").string() + " --quiet");
    CHECK(r.exit_code == 0);
    Tensor vol = p3d::load_tensor(tmp.path() / "vol");
    CHECK(vol.extent(0) == 220);
    CHECK(vol.extent(1) == 220);
    CHECK(vol.extent(2) == 25);
}

TEST_CASE("transform reports a residue error without auto-crop and recovers with it") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(92);
    p3d::save_tensor(tmp.path() / "img", testsup::random_tensor({224, 224}, gen, 0.0, 1.0));
    const std::string in = (tmp.path() / "img.bin").string();

    auto fail = testsup::run_cli("transform --input " + in + " --output " +
                                 (tmp.path() / "v1").string() + " --stride 2 --quiet");
    CHECK(fail.exit_code == 1);
    CHECK(fail.output.find("error:") != std::string::npos);
    CHECK(fail.output.find("residue") != std::string::npos);

    auto ok = testsup::run_cli("transform --input " + in + " --output " +
                               (tmp.path() / "v2").string() + " --stride 2 --auto-crop --quiet");
    CHECK(ok.exit_code == 0);
    Tensor vol = p3d::load_tensor(tmp.path() / "v2");
    CHECK(vol.extent(0) == 110);
    CHECK(vol.extent(2) == 25);
}

TEST_CASE("transform resizes to a target grid") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(93);
    p3d::save_tensor(tmp.path() / "img", testsup::random_tensor({224, 224}, gen, 0.0, 1.0));
    auto r = testsup::run_cli("transform --input " + (tmp.path() / "img.bin").string() +
                              " --output " + (tmp.path() / "vol").string() +
                              " --target 64,64,32 --quiet");
    CHECK(r.exit_code == 0);
    Tensor vol = p3d::load_tensor(tmp.path() / "vol");
    CHECK(vol.extent(0) == 64);
    CHECK(vol.extent(1) == 64);
    CHECK(vol.extent(2) == 32);
}

TEST_CASE("a missing input file exits with the data code") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    auto r = testsup::run_cli("transform --input " + (tmp.path() / "absent.bin").string() +
                              " --output " + (tmp.path() / "out").string() + " --quiet");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error: data:") != std::string::npos);
}

TEST_CASE("unknown flags exit with usage guidance") {
    REQUIRE_CLI();
    auto r = testsup::run_cli("transform --frobnicate 3");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error: usage:") != std::string::npos);

    auto none = testsup::run_cli("");
    CHECK(none.exit_code == 1);
}

TEST_CASE("bad config values exit with the config code") {
    REQUIRE_CLI();
    auto r = testsup::run_cli("verify --threads 0");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error: config:") != std::string::npos);
}

TEST_CASE("verify passes end to end") {
    REQUIRE_CLI();
    auto r = testsup::run_cli("verify --seed 7 --quiet");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("[PASS]") != std::string::npos);
    CHECK(r.output.find("[FAIL]") == std::string::npos);
    CHECK(r.output.find("all checks passed") != std::string::npos);
}

TEST_CASE("augment runs are deterministic for a fixed seed and item") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(94);
    p3d::save_tensor(tmp.path() / "vol", testsup::random_tensor({32, 32, 16}, gen, 0.0, 1.0));
    p3d::AugmentSpec::standard(55).save(tmp.path() / "spec.json");

    const std::string base = "augment --spec " + (tmp.path() / "spec.json").string() +
                             " --input " + (tmp.path() / "vol.bin").string() + " --item-index 3";
    auto r1 = testsup::run_cli(base + " --output " + (tmp.path() / "a").string() + " --quiet");
    auto r2 = testsup::run_cli(base + " --output " + (tmp.path() / "b").string() + " --quiet");
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(testsup::read_file(tmp.path() / "a.bin") == testsup::read_file(tmp.path() / "b.bin"));

    // A different item index gives different bytes.
    auto r3 = testsup::run_cli("augment --spec " + (tmp.path() / "spec.json").string() +
                               " --input " + (tmp.path() / "vol.bin").string() +
                               " --item-index 4 --output " + (tmp.path() / "c").string() +
                               " --quiet");
    CHECK(r3.exit_code == 0);
    CHECK(testsup::read_file(tmp.path() / "a.bin") != testsup::read_file(tmp.path() / "c.bin"));
}

TEST_CASE("batch materializes a mixed corpus from a directory") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(95);
    fs::path corpus = tmp.path() / "corpus";
    fs::create_directories(corpus);
    for (int i = 0; i < 2; ++i) {
        p3d::save_pgm(corpus / ("img_" + std::to_string(i) + ".pgm"),
                      testsup::random_tensor({96, 96}, gen, 0.0, 1.0));
        p3d::save_tensor(corpus / ("vol_" + std::to_string(i)),
                         testsup::random_tensor({80, 72, 40}, gen, 0.0, 500.0));
    }
    p3d::BatchPlan plan;
    plan.batch_size = 2;
    plan.epoch_length = 2;
    plan.seed = 5;
    plan.save(tmp.path() / "plan.json");

    fs::path out = tmp.path() / "out";
    auto r = testsup::run_cli("batch --manifest " + corpus.string() + " --plan " +
                              (tmp.path() / "plan.json").string() + " --out-dir " + out.string() +
                              " --quiet");
    CHECK(r.exit_code == 0);
    auto audit = nlohmann::json::parse(testsup::read_file(out / "schedule.json"));
    CHECK(audit["samples_written"].get<int64_t>() == 4);
    for (int i = 0; i < 4; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%05d_", i);
        Tensor a = p3d::load_tensor(out / (std::string(stem) + "a"));
        CHECK(a.extent(0) == 64);
        CHECK(a.extent(1) == 64);
        CHECK(a.extent(2) == 32);
    }
}

TEST_CASE("global seed flag overrides the plan seed") {
    REQUIRE_CLI();
    testsup::TempDir tmp;
    std::mt19937_64 gen(96);
    fs::path corpus = tmp.path() / "corpus";
    fs::create_directories(corpus);
    p3d::save_pgm(corpus / "img.pgm", testsup::random_tensor({96, 96}, gen, 0.0, 1.0));
    p3d::BatchPlan plan;
    plan.batch_size = 1;
    plan.epoch_length = 1;
    plan.mix_ratio = 1.0;
    plan.seed = 5;
    plan.save(tmp.path() / "plan.json");

    const std::string common = "batch --manifest " + corpus.string() + " --plan " +
                               (tmp.path() / "plan.json").string() + " --quiet --out-dir ";
    auto r1 = testsup::run_cli(common + (tmp.path() / "o1").string());
    auto r2 = testsup::run_cli(common + (tmp.path() / "o2").string() + " --seed 99");
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    auto a1 = nlohmann::json::parse(testsup::read_file(tmp.path() / "o1" / "schedule.json"));
    auto a2 = nlohmann::json::parse(testsup::read_file(tmp.path() / "o2" / "schedule.json"));
    CHECK(a1["plan"]["seed"].get<uint64_t>() == 5);
    CHECK(a2["plan"]["seed"].get<uint64_t>() == 99);
    CHECK(testsup::read_file(tmp.path() / "o1" / "sample_00000_a.bin") !=
          testsup::read_file(tmp.path() / "o2" / "sample_00000_a.bin"));
}

TEST_CASE("bench emits one timing entry per lowering") {
    REQUIRE_CLI();
    auto r = testsup::run_cli("bench --cases conv:H=16,W=16,C=2,M=2,k=3,P=1,s=1 --reps 3 --quiet");
    CHECK(r.exit_code == 0);
    auto report = nlohmann::json::parse(r.output);
    CHECK(report["entries"].size() == 2);
    for (const auto& e : report["entries"]) {
        CHECK(e["median_ms"].get<double>() >= 0.0);
        CHECK(e["min_ms"].get<double>() <= e["median_ms"].get<double>() + 1e-9);
    }
}
