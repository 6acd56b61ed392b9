#ifndef P3D_RNG_HPP
#define P3D_RNG_HPP

#include <cstdint>
#include <random>

namespace p3d::rng {

/// splitmix64 step; the basis for combining seeds and indices into
/// independent stream seeds.
uint64_t splitmix64(uint64_t& state);

/// Order-sensitive mix of up to four words into one stream seed.
uint64_t mix(uint64_t a, uint64_t b, uint64_t c = 0, uint64_t d = 0);

/// Deterministic scalar draw source. The generator sequence is fully
/// specified (mt19937_64) and all distributions are implemented here,
/// so identical seeds give identical draws on every platform and build.
class Stream {
public:
    explicit Stream(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform in [lo, hi); returns lo exactly when lo == hi.
    double uniform(double lo, double hi);

    /// Uniform integer in [lo, hi] inclusive, rejection-sampled (no modulo bias).
    int64_t uniform_int(int64_t lo, int64_t hi);

    /// Standard normal via Box-Muller (one value per call, no cached state).
    double normal();

private:
    std::mt19937_64 gen_;
};

/// Per-item stream derivation: hash the run seed with indices/tags so
/// that items, views, and pipeline stages draw from disjoint streams
/// regardless of evaluation order or thread scheduling.
inline Stream derive_stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return Stream(mix(seed, a, b, c));
}

// Stage tags for stream derivation. Values are arbitrary but frozen;
// changing them changes every derived augmentation.
enum : uint64_t {
    kTagGlobal = 0x676c6f62,
    kTagLocal = 0x6c6f6361,
    kTagCrop = 0x63726f70,
    kTagView = 0x76696577,
    kTagPlanMix = 0x6d697831,
    kTagPlanPick = 0x7069636b,
    kTagInit = 0x696e6974,
};

} // namespace p3d::rng

#endif
