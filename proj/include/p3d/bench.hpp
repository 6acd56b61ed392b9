#ifndef P3D_BENCH_HPP
#define P3D_BENCH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace p3d {

/// One benchmark case parsed from the CLI grammar
///   conv:H=64,W=64,C=16,M=8,k=3,P=1,s=1
///   p3d:H=224,W=224,k=5,s=1
/// Unknown kinds or keys are config errors.
struct BenchCase {
    std::string kind; // "conv" or "p3d"
    std::map<std::string, int64_t> params;
    std::string label; // the original text
};

BenchCase parse_bench_case(const std::string& text);

struct BenchEntry {
    std::string op;
    std::string case_label;
    int64_t reps = 0;
    double median_ms = 0.0;
    double min_ms = 0.0;
};

/// Time each case `reps` times with a fixed-seed input. Every case first
/// cross-checks its operation against an independent computation and
/// aborts with a check error on disagreement, so timings are only ever
/// reported for verified results. A conv case yields two entries (GEMM
/// and direct); a p3d case yields one.
std::vector<BenchEntry> run_bench(const std::vector<BenchCase>& cases, int64_t reps);

std::string bench_report_json(const std::vector<BenchEntry>& entries, int64_t reps);

} // namespace p3d

#endif
