#ifndef P3D_VERIFY_HPP
#define P3D_VERIFY_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace p3d {

struct VerifyCheck {
    std::string name;
    bool pass = false;
    std::string detail; // worst error, counts, or failure description
};

/// Built-in oracle and gradient-check suite backing the `verify`
/// subcommand: direct-convolution cross-checks, shape laws, adjointness,
/// round-trip identities, finite-difference gradient checks, determinism
/// probes, and a short training-descent run.
std::vector<VerifyCheck> run_verify(uint64_t seed);

bool all_passed(const std::vector<VerifyCheck>& checks);

} // namespace p3d

#endif
