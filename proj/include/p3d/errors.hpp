#ifndef P3D_ERRORS_HPP
#define P3D_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace p3d {

// All library failures derive from Error and carry a short machine-readable
// code ("dim", "config", "range", "data", "degenerate", "training", "check").
// The CLI maps codes to exit status: data -> 2, everything else -> 1.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Shape or rank is inconsistent with the operation's contract.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& message) : Error("dim", message) {}
};

// Parameters are structurally invalid (bad stride residue, bad probability, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// An index or region falls outside the tensor.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& message) : Error("range", message) {}
};

// Input files or corpus contents are unusable.
class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error("data", message) {}
};

// Numerically degenerate input (e.g. zero-norm feature vector).
class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& message) : Error("degenerate", message) {}
};

// Training loop produced a non-finite loss.
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& message) : Error("training", message) {}
};

// A built-in correctness cross-check failed (benchmark/verify paths).
class CheckError : public Error {
public:
    explicit CheckError(const std::string& message) : Error("check", message) {}
};

} // namespace p3d

#endif
