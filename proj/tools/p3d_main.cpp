#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "p3d/augment.hpp"
#include "p3d/bench.hpp"
#include "p3d/dataset.hpp"
#include "p3d/errors.hpp"
#include "p3d/parallel.hpp"
#include "p3d/pseudo3d.hpp"
#include "p3d/tensor_io.hpp"
#include "p3d/verify.hpp"

namespace {

using nlohmann::json;

struct GlobalOpts {
    uint64_t seed = 0;
    int threads = 1; // resolved flag > config > P3D_THREADS > 1
    bool quiet = false;
    std::string config_path;
    bool seed_given = false;
};

// Precedence: explicit flag > --config file > P3D_THREADS (threads only) > default.
void resolve_globals(const CLI::App& app, GlobalOpts& g) {
    json cfg;
    if (!g.config_path.empty()) {
        std::ifstream in(g.config_path);
        if (!in) {
            throw p3d::DataError("cannot open config '" + g.config_path + "'");
        }
        cfg = json::parse(in, nullptr, false);
        if (cfg.is_discarded() || !cfg.is_object()) {
            throw p3d::ConfigError("config '" + g.config_path + "' is not a JSON object");
        }
    }
    g.seed_given = app.count("--seed") > 0;
    if (!g.seed_given && cfg.contains("seed")) {
        g.seed = cfg["seed"].get<uint64_t>();
        g.seed_given = true;
    }
    bool threads_set = app.count("--threads") > 0;
    if (!threads_set && cfg.contains("threads")) {
        g.threads = cfg["threads"].get<int>();
        threads_set = true;
    }
    if (app.count("--quiet") == 0 && cfg.contains("quiet")) {
        g.quiet = cfg["quiet"].get<bool>();
    }
    if (!threads_set) {
        if (const char* env = std::getenv("P3D_THREADS")) {
            try {
                g.threads = std::stoi(env);
            } catch (const std::exception&) {
                throw p3d::ConfigError("P3D_THREADS value '" + std::string(env) +
                                       "' is not an integer");
            }
            threads_set = true;
        }
    }
    if (!threads_set) g.threads = 1;
    if (g.threads < 1) {
        throw p3d::ConfigError("thread count must be >= 1, got " + std::to_string(g.threads));
    }
    p3d::set_thread_count(g.threads);
}

void echo_config(const GlobalOpts& g, const std::string& subcommand, json extra) {
    if (g.quiet) return;
    json j;
    j["subcommand"] = subcommand;
    j["seed"] = g.seed;
    j["threads"] = g.threads;
    j["quiet"] = g.quiet;
    for (auto& [key, value] : extra.items()) {
        j[key] = std::move(value);
    }
    std::cout << j.dump(2) << "\n";
}

struct TransformArgs {
    std::string input;
    std::string output;
    int64_t window = 5;
    int64_t stride = 1;
    std::vector<int64_t> target;
    bool auto_crop = false;
};

int run_transform(const GlobalOpts& g, const TransformArgs& a) {
    if (!a.target.empty() && a.target.size() != 3) {
        throw p3d::ConfigError("--target expects H,W,D (three integers)");
    }
    const p3d::P3DConfig cfg{a.window, a.stride};
    cfg.validate();

    p3d::Tensor img = p3d::load_image_or_tensor(a.input);
    if (a.auto_crop) {
        img = p3d::center_crop_compatible(img, cfg);
    }

    p3d::Tensor vol;
    if (img.rank() == 2) {
        vol = p3d::to_pseudo3d(img, cfg);
        if (!a.target.empty()) {
            vol = p3d::resize_trilinear(vol, a.target[0], a.target[1], a.target[2]);
        }
    } else if (img.rank() == 3) {
        if (!a.target.empty()) {
            throw p3d::ConfigError("--target is only supported for single-channel 2D inputs");
        }
        vol = p3d::to_pseudo3d_stack(img, cfg);
    } else {
        throw p3d::DimensionError("transform input must be rank 2 or 3, got " +
                                  p3d::shape_str(img));
    }
    p3d::save_tensor(a.output, vol);

    echo_config(g, "transform",
                {{"input", a.input},
                 {"output", a.output},
                 {"window", a.window},
                 {"stride", a.stride},
                 {"auto_crop", a.auto_crop},
                 {"target", a.target},
                 {"output_shape", vol.shape()}});
    return 0;
}

struct AugmentArgs {
    std::string spec_path;
    std::string input;
    std::string output;
    int64_t item_index = 0;
};

int run_augment(const GlobalOpts& g, const AugmentArgs& a) {
    p3d::AugmentSpec spec = p3d::AugmentSpec::load(a.spec_path);
    if (g.seed_given) spec.seed = g.seed;

    const p3d::Tensor input = p3d::load_tensor(a.input);
    p3d::Tensor out = p3d::augment_global(input, spec, a.item_index);
    out = p3d::augment_local(out, spec, a.item_index);
    p3d::save_tensor(a.output, out);

    echo_config(g, "augment",
                {{"spec", a.spec_path},
                 {"input", a.input},
                 {"output", a.output},
                 {"item_index", a.item_index},
                 {"augment_seed", spec.seed},
                 {"output_shape", out.shape()}});
    return 0;
}

struct BatchArgs {
    std::string manifest;
    std::string plan_path;
    std::string out_dir;
};

int run_batch_cmd(const GlobalOpts& g, const BatchArgs& a) {
    const p3d::CorpusManifest manifest = std::filesystem::is_directory(a.manifest)
                                             ? p3d::CorpusManifest::scan(a.manifest)
                                             : p3d::CorpusManifest::load(a.manifest);
    p3d::BatchPlan plan = p3d::BatchPlan::load(a.plan_path);
    if (g.seed_given) plan.seed = g.seed;

    const p3d::BatchRunResult result = p3d::run_batch(manifest, plan, a.out_dir);

    json rejects = json::array();
    for (const auto& r : result.rejects) {
        rejects.push_back({{"path", r.path}, {"reason", r.reason}});
    }
    echo_config(g, "batch",
                {{"manifest", a.manifest},
                 {"plan", json::parse(plan.to_json_string())},
                 {"out_dir", a.out_dir},
                 {"corpus_2d", manifest.count(p3d::Kind::Image2D)},
                 {"corpus_3d", manifest.count(p3d::Kind::Volume3D)},
                 {"samples_written", result.samples_written},
                 {"rejects", rejects}});
    return 0;
}

int run_verify_cmd(const GlobalOpts& g) {
    echo_config(g, "verify", json::object());
    const auto checks = p3d::run_verify(g.seed);
    for (const auto& c : checks) {
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name;
        if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << "\n";
    }
    const bool ok = p3d::all_passed(checks);
    std::cout << (ok ? "all checks passed" : "CHECKS FAILED") << " (" << checks.size()
              << " total)\n";
    return ok ? 0 : 1;
}

struct BenchArgs {
    std::vector<std::string> cases;
    int64_t reps = 5;
};

int run_bench_cmd(const GlobalOpts& g, const BenchArgs& a) {
    std::vector<std::string> case_texts = a.cases;
    if (case_texts.empty()) {
        case_texts = {"conv:H=64,W=64,C=16,M=8,k=3,P=1,s=1", "p3d:H=224,W=224,k=5,s=1"};
    }
    std::vector<p3d::BenchCase> cases;
    cases.reserve(case_texts.size());
    for (const auto& text : case_texts) {
        cases.push_back(p3d::parse_bench_case(text));
    }
    echo_config(g, "bench", {{"cases", case_texts}, {"reps", a.reps}});
    const auto entries = p3d::run_bench(cases, a.reps);
    std::cout << p3d::bench_report_json(entries, a.reps) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pseudo-3D transformation toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags are accepted after the subcommand name

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Seed for every stochastic operation");
    app.add_option("--threads", g.threads, "Worker thread count (default: P3D_THREADS or 1)");
    app.add_flag("--quiet", g.quiet, "Suppress the resolved-config echo");
    app.add_option("--config", g.config_path, "JSON file with global defaults");

    TransformArgs transform_args;
    auto* transform = app.add_subcommand("transform", "Convert a 2D image to a pseudo-3D volume");
    transform->add_option("--input", transform_args.input, "PGM image or raw+header tensor")
        ->required();
    transform->add_option("--output", transform_args.output, "Output tensor base path")
        ->required();
    transform->add_option("--window", transform_args.window, "Sliding window size k");
    transform->add_option("--stride", transform_args.stride, "Window stride s");
    transform->add_option("--target", transform_args.target, "Resize output to H,W,D")
        ->delimiter(',');
    transform->add_flag("--auto-crop", transform_args.auto_crop,
                        "Center-crop to window/stride-compatible extents first");

    AugmentArgs augment_args;
    auto* augment = app.add_subcommand("augment", "Apply a two-stage augmentation recipe");
    augment->add_option("--spec", augment_args.spec_path, "Augmentation spec JSON")->required();
    augment->add_option("--input", augment_args.input, "Input volume tensor")->required();
    augment->add_option("--output", augment_args.output, "Output tensor base path")->required();
    augment->add_option("--item-index", augment_args.item_index, "Stream index of this item");

    BatchArgs batch_args;
    auto* batch = app.add_subcommand("batch", "Materialize an epoch of view pairs");
    batch->add_option("--manifest", batch_args.manifest,
                      "Corpus manifest JSON, or a directory to scan")
        ->required();
    batch->add_option("--plan", batch_args.plan_path, "Batch plan JSON")->required();
    batch->add_option("--out-dir", batch_args.out_dir, "Output directory")->required();

    auto* verify = app.add_subcommand("verify", "Run the built-in oracle and gradient checks");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Time lowering and transform operations");
    bench->add_option("--cases", bench_args.cases,
                      "Case specs like conv:H=64,k=3 or p3d:H=224,k=5 (repeatable)");
    bench->add_option("--reps", bench_args.reps, "Repetitions per case");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 1;
    }

    try {
        resolve_globals(app, g);
        if (app.got_subcommand(transform)) return run_transform(g, transform_args);
        if (app.got_subcommand(augment)) return run_augment(g, augment_args);
        if (app.got_subcommand(batch)) return run_batch_cmd(g, batch_args);
        if (app.got_subcommand(verify)) return run_verify_cmd(g);
        if (app.got_subcommand(bench)) return run_bench_cmd(g, bench_args);
    } catch (const p3d::Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return e.code() == "data" ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
