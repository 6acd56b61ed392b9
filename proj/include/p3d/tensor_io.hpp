#ifndef P3D_TENSOR_IO_HPP
#define P3D_TENSOR_IO_HPP

#include <filesystem>
#include <string>

#include "p3d/tensor.hpp"

namespace p3d {

// Raw+header tensor format: <name>.bin holds the flat little-endian scalar
// buffer, <name>.json is the sidecar {"dtype": "f32"|"f64", "shape": [...],
// "layout": "row-major"}. Round trips are bit-exact.

/// Strip a trailing .bin/.json so callers may pass either component or the base.
std::filesystem::path tensor_base_path(const std::filesystem::path& p);

/// Write base.bin + base.json. The tensor's dtype selects the scalar width.
void save_tensor(const std::filesystem::path& base, const Tensor& t);

/// Read base.json + base.bin. f32 data widens exactly to the double buffer
/// and the tensor keeps dtype F32 so a re-save reproduces the bytes.
Tensor load_tensor(const std::filesystem::path& base);

/// True if the path names a readable tensor sidecar (dtype/shape/layout).
bool is_tensor_sidecar(const std::filesystem::path& json_path);

// PGM images (P2 ascii and P5 binary, 8- or 16-bit). Values are scaled by
// the file's maxval into [0, 1].
Tensor load_pgm(const std::filesystem::path& path);

/// Quantize a [0, 1] image to the given maxval (255 or 65535) and write P5.
void save_pgm(const std::filesystem::path& path, const Tensor& img, int maxval = 255);

/// Load either format by extension: .pgm or raw+header base/.bin/.json.
Tensor load_image_or_tensor(const std::filesystem::path& path);

} // namespace p3d

#endif
