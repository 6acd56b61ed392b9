#include "p3d/rng.hpp"

#include <cmath>
#include <numbers>

namespace p3d::rng {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    uint64_t state = a;
    uint64_t h = splitmix64(state);
    state ^= b + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(state);
    state ^= c + 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(state);
    state ^= d + 0x165667b19e3779f9ULL;
    h ^= splitmix64(state);
    return h;
}

double Stream::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Stream::uniform(double lo, double hi) {
    return lo + uniform() * (hi - lo);
}

int64_t Stream::uniform_int(int64_t lo, int64_t hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(gen_()); // full 64-bit range
    const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t u;
    do {
        u = gen_();
    } while (u >= limit);
    return lo + static_cast<int64_t>(u % range);
}

double Stream::normal() {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace p3d::rng
