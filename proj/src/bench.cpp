#include "p3d/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include <json.hpp>

#include "p3d/errors.hpp"
#include "p3d/im2col.hpp"
#include "p3d/parallel.hpp"
#include "p3d/pseudo3d.hpp"
#include "p3d/reference.hpp"
#include "p3d/rng.hpp"

namespace p3d {

namespace {

const std::map<std::string, std::vector<std::pair<std::string, int64_t>>> kCaseKeys = {
    {"conv", {{"H", 64}, {"W", 64}, {"C", 1}, {"M", 1}, {"k", 3}, {"P", 0}, {"s", 1}}},
    {"p3d", {{"H", 224}, {"W", 224}, {"k", 5}, {"s", 1}}},
};

uint64_t label_seed(const std::string& label) {
    uint64_t seed = 0xbe4c4;
    for (unsigned char ch : label) {
        seed = rng::mix(seed, ch);
    }
    return seed;
}

} // namespace

BenchCase parse_bench_case(const std::string& text) {
    BenchCase c;
    c.label = text;
    const auto colon = text.find(':');
    c.kind = text.substr(0, colon);
    const auto keys = kCaseKeys.find(c.kind);
    if (keys == kCaseKeys.end()) {
        throw ConfigError("unknown benchmark case kind '" + c.kind +
                          "' (expected conv:... or p3d:...)");
    }
    for (const auto& [key, value] : keys->second) {
        c.params[key] = value;
    }
    if (colon == std::string::npos) return c;

    std::string rest = text.substr(colon + 1);
    size_t pos = 0;
    while (pos < rest.size()) {
        const auto comma = rest.find(',', pos);
        const std::string item =
            rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        pos = comma == std::string::npos ? rest.size() : comma + 1;
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("benchmark case item '" + item + "' is not key=value");
        }
        const std::string key = item.substr(0, eq);
        if (!c.params.count(key)) {
            throw ConfigError("benchmark case key '" + key + "' is not valid for kind '" +
                              c.kind + "'");
        }
        try {
            c.params[key] = std::stoll(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("benchmark case value for '" + key + "' is not an integer");
        }
    }
    return c;
}

namespace {

struct Timing {
    double median_ms;
    double min_ms;
};

Timing time_op(const std::function<void()>& op, int64_t reps) {
    std::vector<double> ms(static_cast<size_t>(reps));
    for (auto& sample : ms) {
        const auto t0 = std::chrono::steady_clock::now();
        op();
        const auto t1 = std::chrono::steady_clock::now();
        sample = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    const size_t n = ms.size();
    const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    return {median, ms.front()};
}

Tensor random_tensor(std::vector<int64_t> shape, rng::Stream& stream) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) {
        t[i] = stream.uniform(-1.0, 1.0);
    }
    return t;
}

void bench_conv(const BenchCase& c, int64_t reps, std::vector<BenchEntry>& out) {
    ConvSpec spec{c.params.at("k"), c.params.at("C"), c.params.at("M"), c.params.at("P"),
                  c.params.at("s")};
    auto stream = rng::Stream(label_seed(c.label));
    const Tensor input = random_tensor({c.params.at("H"), c.params.at("W"), spec.channels},
                                       stream);
    const Tensor kernels =
        random_tensor({spec.kernels, spec.k, spec.k, spec.channels}, stream);

    const Tensor gemm = conv2d_gemm(input, kernels, spec);
    const Tensor direct = ref::conv2d_direct(input, kernels, spec);
    const double diff = max_abs_diff(gemm, direct);
    if (diff > 1e-12) {
        throw CheckError("benchmark case '" + c.label +
                         "': GEMM and direct convolution disagree by " + std::to_string(diff));
    }

    const Timing tg = time_op([&] { conv2d_gemm(input, kernels, spec); }, reps);
    out.push_back({"conv2d_gemm", c.label, reps, tg.median_ms, tg.min_ms});
    const Timing td = time_op([&] { ref::conv2d_direct(input, kernels, spec); }, reps);
    out.push_back({"conv2d_direct", c.label, reps, td.median_ms, td.min_ms});
}

void bench_p3d(const BenchCase& c, int64_t reps, std::vector<BenchEntry>& out) {
    const P3DConfig cfg{c.params.at("k"), c.params.at("s")};
    auto stream = rng::Stream(label_seed(c.label));
    const Tensor img = random_tensor({c.params.at("H"), c.params.at("W")}, stream);

    const Tensor vol = to_pseudo3d(img, cfg);
    const Tensor back = from_pseudo3d(vol, cfg, img.extent(0), img.extent(1));
    if (!bitwise_equal(img, back)) {
        throw CheckError("benchmark case '" + c.label +
                         "': window transform round trip is not exact");
    }

    const Timing t = time_op([&] { to_pseudo3d(img, cfg); }, reps);
    out.push_back({"to_pseudo3d", c.label, reps, t.median_ms, t.min_ms});
}

} // namespace

std::vector<BenchEntry> run_bench(const std::vector<BenchCase>& cases, int64_t reps) {
    if (reps < 1) throw ConfigError("benchmark repetitions must be >= 1");
    std::vector<BenchEntry> entries;
    for (const auto& c : cases) {
        if (c.kind == "conv") {
            bench_conv(c, reps, entries);
        } else {
            bench_p3d(c, reps, entries);
        }
    }
    return entries;
}

std::string bench_report_json(const std::vector<BenchEntry>& entries, int64_t reps) {
    nlohmann::json j;
    j["reps"] = reps;
    j["threads"] = thread_count();
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        j["entries"].push_back({{"op", e.op},
                                {"case", e.case_label},
                                {"reps", e.reps},
                                {"median_ms", e.median_ms},
                                {"min_ms", e.min_ms}});
    }
    return j.dump(2);
}

} // namespace p3d
