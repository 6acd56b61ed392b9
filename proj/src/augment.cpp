#include "p3d/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace p3d {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

void check_prob(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError(std::string(what) + " must lie in [0, 1], got " + std::to_string(p));
    }
}

} // namespace

void AugmentSpec::validate() const {
    for (const auto& op : global_ops) {
        if (const auto* flip = std::get_if<FlipOp>(&op)) {
            for (double p : flip->axis_probs) check_prob(p, "flip probability");
        } else if (const auto* aff = std::get_if<AffineOp>(&op)) {
            for (double r : aff->max_rotation_deg) {
                if (r < 0.0) throw ConfigError("max rotation must be >= 0");
            }
            if (aff->max_scale_dev < 0.0 || aff->max_scale_dev >= 1.0) {
                throw ConfigError("max scale deviation must lie in [0, 1)");
            }
            check_prob(aff->max_translation_frac, "max translation fraction");
        }
    }
    for (const auto& op : local_ops) {
        if (const auto* noise = std::get_if<NoiseOp>(&op)) {
            if (noise->std < 0.0) throw ConfigError("noise std must be >= 0");
        } else if (const auto* blur = std::get_if<BlurOp>(&op)) {
            if (!(blur->sigma_range[0] > 0.0) || blur->sigma_range[1] < blur->sigma_range[0]) {
                throw ConfigError("blur sigma range must satisfy 0 < lo <= hi");
            }
        } else if (const auto* swap = std::get_if<SwapOp>(&op)) {
            for (int64_t e : swap->patch_extent) {
                if (e < 1) throw ConfigError("swap patch extent must be >= 1");
            }
            if (swap->swap_count < 0) throw ConfigError("swap count must be >= 0");
        } else if (const auto* gamma = std::get_if<GammaOp>(&op)) {
            if (gamma->gamma_range[0] < 0.25 || gamma->gamma_range[1] > 4.0 ||
                gamma->gamma_range[1] < gamma->gamma_range[0]) {
                throw ConfigError("gamma range must satisfy 0.25 <= lo <= hi <= 4");
            }
        }
    }
}

namespace {

json op_to_json(const GlobalOp& op) {
    json j;
    if (const auto* flip = std::get_if<FlipOp>(&op)) {
        j["op"] = "flip";
        j["axis_probs"] = flip->axis_probs;
    } else {
        const auto& aff = std::get<AffineOp>(op);
        j["op"] = "affine";
        j["max_rotation_deg"] = aff.max_rotation_deg;
        j["max_scale_dev"] = aff.max_scale_dev;
        j["max_translation_frac"] = aff.max_translation_frac;
    }
    return j;
}

json op_to_json(const LocalOp& op) {
    json j;
    if (const auto* noise = std::get_if<NoiseOp>(&op)) {
        j["op"] = "noise";
        j["std"] = noise->std;
    } else if (const auto* blur = std::get_if<BlurOp>(&op)) {
        j["op"] = "gaussian_blur";
        j["sigma_range"] = blur->sigma_range;
    } else if (const auto* swap = std::get_if<SwapOp>(&op)) {
        j["op"] = "swap";
        j["patch_extent"] = swap->patch_extent;
        j["swap_count"] = swap->swap_count;
    } else {
        const auto& gamma = std::get<GammaOp>(op);
        j["op"] = "gamma";
        j["gamma_range"] = gamma.gamma_range;
    }
    return j;
}

GlobalOp global_op_from_json(const json& j) {
    const std::string name = j.at("op").get<std::string>();
    if (name == "flip") {
        FlipOp op;
        if (j.contains("axis_probs")) op.axis_probs = j["axis_probs"].get<std::array<double, 3>>();
        return op;
    }
    if (name == "affine") {
        AffineOp op;
        if (j.contains("max_rotation_deg")) {
            op.max_rotation_deg = j["max_rotation_deg"].get<std::array<double, 3>>();
        }
        if (j.contains("max_scale_dev")) op.max_scale_dev = j["max_scale_dev"].get<double>();
        if (j.contains("max_translation_frac")) {
            op.max_translation_frac = j["max_translation_frac"].get<double>();
        }
        return op;
    }
    throw ConfigError("unknown global augmentation op '" + name + "'");
}

LocalOp local_op_from_json(const json& j) {
    const std::string name = j.at("op").get<std::string>();
    if (name == "noise") {
        NoiseOp op;
        if (j.contains("std")) op.std = j["std"].get<double>();
        return op;
    }
    if (name == "gaussian_blur") {
        BlurOp op;
        if (j.contains("sigma_range")) op.sigma_range = j["sigma_range"].get<std::array<double, 2>>();
        return op;
    }
    if (name == "swap") {
        SwapOp op;
        if (j.contains("patch_extent")) {
            op.patch_extent = j["patch_extent"].get<std::array<int64_t, 3>>();
        }
        if (j.contains("swap_count")) op.swap_count = j["swap_count"].get<int64_t>();
        return op;
    }
    if (name == "gamma") {
        GammaOp op;
        if (j.contains("gamma_range")) op.gamma_range = j["gamma_range"].get<std::array<double, 2>>();
        return op;
    }
    throw ConfigError("unknown local augmentation op '" + name + "'");
}

} // namespace

std::string AugmentSpec::to_json_string() const {
    json j;
    j["seed"] = seed;
    j["global"] = json::array();
    for (const auto& op : global_ops) j["global"].push_back(op_to_json(op));
    j["local"] = json::array();
    for (const auto& op : local_ops) j["local"].push_back(op_to_json(op));
    return j.dump(2);
}

AugmentSpec AugmentSpec::from_json_string(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ConfigError("augmentation spec is not a JSON object");
    }
    AugmentSpec spec;
    spec.seed = j.value("seed", uint64_t{0});
    try {
        for (const auto& op : j.value("global", json::array())) {
            spec.global_ops.push_back(global_op_from_json(op));
        }
        for (const auto& op : j.value("local", json::array())) {
            spec.local_ops.push_back(local_op_from_json(op));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed augmentation spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

AugmentSpec AugmentSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open augmentation spec '" + path.string() + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

void AugmentSpec::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write augmentation spec '" + path.string() + "'");
    }
    out << to_json_string() << "\n";
}

AugmentSpec AugmentSpec::standard(uint64_t seed) {
    AugmentSpec spec;
    spec.seed = seed;
    spec.global_ops = {FlipOp{}, AffineOp{}};
    spec.local_ops = {NoiseOp{}, BlurOp{}, SwapOp{}, GammaOp{}};
    return spec;
}

AugmentSpec AugmentSpec::identity(uint64_t seed) {
    AugmentSpec spec;
    spec.seed = seed;
    spec.global_ops = {FlipOp{{0.0, 0.0, 0.0}}, AffineOp{{0.0, 0.0, 0.0}, 0.0, 0.0}};
    spec.local_ops = {NoiseOp{0.0}, GammaOp{{1.0, 1.0}}};
    return spec;
}

namespace {

void require_volume(const Tensor& v, const char* what) {
    if (v.rank() != 3) {
        throw DimensionError(std::string(what) + ": expected H x W x D volume, got " +
                             shape_str(v));
    }
}

Tensor flip_axes(const Tensor& v, const std::array<bool, 3>& flip) {
    if (!flip[0] && !flip[1] && !flip[2]) return v;
    const int64_t h = v.extent(0);
    const int64_t w = v.extent(1);
    const int64_t d = v.extent(2);
    Tensor out(v.shape(), 0.0, v.dtype());
    for (int64_t i = 0; i < h; ++i) {
        const int64_t si = flip[0] ? h - 1 - i : i;
        for (int64_t j = 0; j < w; ++j) {
            const int64_t sj = flip[1] ? w - 1 - j : j;
            for (int64_t l = 0; l < d; ++l) {
                const int64_t sl = flip[2] ? d - 1 - l : l;
                out.at(i, j, l) = v.at(si, sj, sl);
            }
        }
    }
    return out;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a[i][k] * b[k][j];
            r[i][j] = acc;
        }
    }
    return r;
}

// Rotation about a single axis, acting on the plane of the two other axes.
Mat3 axis_rotation(int axis, double radians) {
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    r[u][u] = c;
    r[u][v] = -s;
    r[v][u] = s;
    r[v][v] = c;
    return r;
}

// Trilinear sample with zero border; exact at integer coordinates.
double sample_border0(const Tensor& v, double y, double x, double z) {
    const int64_t h = v.extent(0);
    const int64_t w = v.extent(1);
    const int64_t d = v.extent(2);
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const double fz = std::floor(z);
    const auto iy = static_cast<int64_t>(fy);
    const auto ix = static_cast<int64_t>(fx);
    const auto iz = static_cast<int64_t>(fz);
    auto fetch = [&](int64_t a, int64_t b, int64_t c) -> double {
        if (a < 0 || a >= h || b < 0 || b >= w || c < 0 || c >= d) return 0.0;
        return v.at(a, b, c);
    };
    const double ty = y - fy;
    const double tx = x - fx;
    const double tz = z - fz;
    const double c00 = std::lerp(fetch(iy, ix, iz), fetch(iy, ix, iz + 1), tz);
    const double c01 = std::lerp(fetch(iy, ix + 1, iz), fetch(iy, ix + 1, iz + 1), tz);
    const double c10 = std::lerp(fetch(iy + 1, ix, iz), fetch(iy + 1, ix, iz + 1), tz);
    const double c11 = std::lerp(fetch(iy + 1, ix + 1, iz), fetch(iy + 1, ix + 1, iz + 1), tz);
    const double c0 = std::lerp(c00, c01, tx);
    const double c1 = std::lerp(c10, c11, tx);
    return std::lerp(c0, c1, ty);
}

// Resample under the forward map y = R * scale * (x - c) + c + t by pulling
// each output voxel back through the inverse.
Tensor affine_resample(const Tensor& v, const Mat3& rot, double scl,
                       const std::array<double, 3>& trans) {
    const int64_t h = v.extent(0);
    const int64_t w = v.extent(1);
    const int64_t d = v.extent(2);
    const std::array<double, 3> center{(h - 1) / 2.0, (w - 1) / 2.0, (d - 1) / 2.0};
    Tensor out(v.shape(), 0.0, v.dtype());
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            for (int64_t l = 0; l < d; ++l) {
                const std::array<double, 3> rel{static_cast<double>(i) - center[0] - trans[0],
                                                static_cast<double>(j) - center[1] - trans[1],
                                                static_cast<double>(l) - center[2] - trans[2]};
                // R is orthogonal, so the inverse rotation is the transpose.
                std::array<double, 3> src{};
                for (int a = 0; a < 3; ++a) {
                    src[a] = (rot[0][a] * rel[0] + rot[1][a] * rel[1] + rot[2][a] * rel[2]) / scl +
                             center[a];
                }
                out.at(i, j, l) = sample_border0(v, src[0], src[1], src[2]);
            }
        }
    }
    return out;
}

Tensor apply_flip(const Tensor& v, const FlipOp& op, rng::Stream& stream) {
    std::array<bool, 3> do_flip{};
    for (int ax = 0; ax < 3; ++ax) {
        do_flip[static_cast<size_t>(ax)] = stream.uniform() < op.axis_probs[static_cast<size_t>(ax)];
    }
    return flip_axes(v, do_flip);
}

Tensor apply_affine(const Tensor& v, const AffineOp& op, rng::Stream& stream) {
    std::array<double, 3> radians{};
    for (int ax = 0; ax < 3; ++ax) {
        const double deg = stream.uniform(-op.max_rotation_deg[static_cast<size_t>(ax)],
                                          op.max_rotation_deg[static_cast<size_t>(ax)]);
        radians[static_cast<size_t>(ax)] = deg * kPi / 180.0;
    }
    const double scl = stream.uniform(1.0 - op.max_scale_dev, 1.0 + op.max_scale_dev);
    std::array<double, 3> trans{};
    for (int ax = 0; ax < 3; ++ax) {
        const double span = op.max_translation_frac * static_cast<double>(v.extent(ax));
        trans[static_cast<size_t>(ax)] = stream.uniform(-span, span);
    }
    const Mat3 rot = matmul3(axis_rotation(0, radians[0]),
                             matmul3(axis_rotation(1, radians[1]), axis_rotation(2, radians[2])));
    return affine_resample(v, rot, scl, trans);
}

Tensor apply_noise(const Tensor& v, const NoiseOp& op, rng::Stream& stream) {
    Tensor out = v;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i] + op.std * stream.normal(), 0.0, 1.0);
    }
    return out;
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// One separable pass. Written as center + weighted deviations over the raw
// weight sum, which preserves constant lines to the last bit.
void blur_axis(Tensor& v, int axis, const std::vector<double>& weights, double weight_sum) {
    const int64_t h = v.extent(0);
    const int64_t w = v.extent(1);
    const int64_t d = v.extent(2);
    const auto radius = static_cast<int64_t>(weights.size() / 2);
    const int64_t n = v.extent(axis);
    Tensor src = v;
    std::array<int64_t, 3> idx{};
    for (idx[0] = 0; idx[0] < h; ++idx[0]) {
        for (idx[1] = 0; idx[1] < w; ++idx[1]) {
            for (idx[2] = 0; idx[2] < d; ++idx[2]) {
                const double center = src.at(idx[0], idx[1], idx[2]);
                double dev = 0.0;
                for (int64_t o = -radius; o <= radius; ++o) {
                    if (o == 0) continue;
                    auto nb = idx;
                    nb[static_cast<size_t>(axis)] =
                        reflect_index(idx[static_cast<size_t>(axis)] + o, n);
                    dev += weights[static_cast<size_t>(o + radius)] *
                           (src.at(nb[0], nb[1], nb[2]) - center);
                }
                v.at(idx[0], idx[1], idx[2]) = center + dev / weight_sum;
            }
        }
    }
}

Tensor apply_blur(const Tensor& v, const BlurOp& op, rng::Stream& stream) {
    const double sigma = stream.uniform(op.sigma_range[0], op.sigma_range[1]);
    const auto radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> weights(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int64_t o = -radius; o <= radius; ++o) {
        const double x = static_cast<double>(o) / sigma;
        weights[static_cast<size_t>(o + radius)] = std::exp(-0.5 * x * x);
        sum += weights[static_cast<size_t>(o + radius)];
    }
    Tensor out = v;
    for (int axis = 0; axis < 3; ++axis) {
        blur_axis(out, axis, weights, sum);
    }
    return out;
}

Tensor apply_swap(const Tensor& v, const SwapOp& op, rng::Stream& stream) {
    Tensor out = v;
    if (op.swap_count == 0) return out;
    for (int ax = 0; ax < 3; ++ax) {
        if (op.patch_extent[static_cast<size_t>(ax)] >= v.extent(ax)) {
            throw ConfigError("swap patch extent " +
                              std::to_string(op.patch_extent[static_cast<size_t>(ax)]) +
                              " must be smaller than volume extent " +
                              std::to_string(v.extent(ax)) + " on axis " + std::to_string(ax));
        }
    }
    const auto& pe = op.patch_extent;
    for (int64_t n = 0; n < op.swap_count; ++n) {
        std::array<int64_t, 3> a{}, b{};
        bool found = false;
        for (int attempt = 0; attempt < 16 && !found; ++attempt) {
            for (int ax = 0; ax < 3; ++ax) {
                a[static_cast<size_t>(ax)] =
                    stream.uniform_int(0, v.extent(ax) - pe[static_cast<size_t>(ax)]);
                b[static_cast<size_t>(ax)] =
                    stream.uniform_int(0, v.extent(ax) - pe[static_cast<size_t>(ax)]);
            }
            bool overlap = true;
            for (int ax = 0; ax < 3; ++ax) {
                if (std::llabs(a[static_cast<size_t>(ax)] - b[static_cast<size_t>(ax)]) >=
                    pe[static_cast<size_t>(ax)]) {
                    overlap = false;
                    break;
                }
            }
            found = !overlap;
        }
        if (!found) continue; // volume too crowded for disjoint patches; skip this swap
        for (int64_t i = 0; i < pe[0]; ++i) {
            for (int64_t j = 0; j < pe[1]; ++j) {
                for (int64_t l = 0; l < pe[2]; ++l) {
                    std::swap(out.at(a[0] + i, a[1] + j, a[2] + l),
                              out.at(b[0] + i, b[1] + j, b[2] + l));
                }
            }
        }
    }
    return out;
}

Tensor apply_gamma(const Tensor& v, const GammaOp& op, rng::Stream& stream) {
    const double gamma = stream.uniform(op.gamma_range[0], op.gamma_range[1]);
    if (gamma == 1.0) return v;
    Tensor out = v;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = std::pow(std::clamp(out[i], 0.0, 1.0), gamma);
    }
    return out;
}

} // namespace

Tensor apply_global_ops(const Tensor& v, const AugmentSpec& spec, rng::Stream& stream) {
    require_volume(v, "augment_global");
    spec.validate();
    Tensor out = v;
    for (const auto& op : spec.global_ops) {
        if (const auto* flip = std::get_if<FlipOp>(&op)) {
            out = apply_flip(out, *flip, stream);
        } else {
            out = apply_affine(out, std::get<AffineOp>(op), stream);
        }
    }
    return out;
}

Tensor apply_local_ops(const Tensor& v, const AugmentSpec& spec, rng::Stream& stream) {
    require_volume(v, "augment_local");
    spec.validate();
    Tensor out = v;
    for (const auto& op : spec.local_ops) {
        if (const auto* noise = std::get_if<NoiseOp>(&op)) {
            out = apply_noise(out, *noise, stream);
        } else if (const auto* blur = std::get_if<BlurOp>(&op)) {
            out = apply_blur(out, *blur, stream);
        } else if (const auto* swap = std::get_if<SwapOp>(&op)) {
            out = apply_swap(out, *swap, stream);
        } else {
            out = apply_gamma(out, std::get<GammaOp>(op), stream);
        }
    }
    return out;
}

Tensor augment_global(const Tensor& v, const AugmentSpec& spec, int64_t item_index) {
    auto stream = rng::derive_stream(spec.seed, static_cast<uint64_t>(item_index), rng::kTagGlobal);
    return apply_global_ops(v, spec, stream);
}

Tensor augment_local(const Tensor& v, const AugmentSpec& spec, int64_t item_index) {
    auto stream = rng::derive_stream(spec.seed, static_cast<uint64_t>(item_index), rng::kTagLocal);
    return apply_local_ops(v, spec, stream);
}

Tensor random_crop_3d(const Tensor& v, rng::Stream& stream,
                      const std::vector<std::array<int64_t, 3>>& sizes,
                      const std::array<int64_t, 3>& target) {
    require_volume(v, "random_crop_3d");
    if (sizes.empty()) {
        throw ConfigError("random_crop_3d: crop size set is empty");
    }

    auto fits = [&](const std::array<int64_t, 3>& s) {
        return s[0] <= v.extent(0) && s[1] <= v.extent(1) && s[2] <= v.extent(2);
    };
    auto volume_of = [](const std::array<int64_t, 3>& s) { return s[0] * s[1] * s[2]; };

    const auto drawn =
        sizes[static_cast<size_t>(stream.uniform_int(0, static_cast<int64_t>(sizes.size()) - 1))];

    Tensor source = v;
    std::array<int64_t, 3> size = drawn;
    if (!fits(drawn)) {
        const std::array<int64_t, 3>* best = nullptr;
        for (const auto& s : sizes) {
            if (fits(s) && (!best || volume_of(s) > volume_of(*best))) best = &s;
        }
        if (best) {
            size = *best;
        } else {
            // Nothing fits: replicate-pad up to the smallest listed size.
            // Padding is capped at doubling each axis; volumes needing more
            // are rejected rather than filled with mostly synthetic voxels.
            const std::array<int64_t, 3>* smallest = &sizes.front();
            for (const auto& s : sizes) {
                if (volume_of(s) < volume_of(*smallest)) smallest = &s;
            }
            size = *smallest;
            for (int ax = 0; ax < 3; ++ax) {
                if (size[static_cast<size_t>(ax)] > 2 * v.extent(ax)) {
                    throw DataError("volume " + shape_str(v) +
                                    " is too small for the smallest crop size " +
                                    shape_str(std::span<const int64_t>(size.data(), 3)) +
                                    " even after edge padding");
                }
            }
            std::array<int64_t, 3> padded{std::max(size[0], v.extent(0)),
                                          std::max(size[1], v.extent(1)),
                                          std::max(size[2], v.extent(2))};
            source = pad_replicate(v, std::span<const int64_t>(padded.data(), 3));
        }
    }

    std::array<int64_t, 3> origin{};
    for (int ax = 0; ax < 3; ++ax) {
        origin[static_cast<size_t>(ax)] =
            stream.uniform_int(0, source.extent(ax) - size[static_cast<size_t>(ax)]);
    }
    const Tensor patch = crop(source, std::span<const int64_t>(origin.data(), 3),
                              std::span<const int64_t>(size.data(), 3));
    return resize_trilinear(patch, target[0], target[1], target[2]);
}

Tensor random_crop_resize_2d(const Tensor& img, rng::Stream& stream,
                             const std::array<double, 2>& area_fraction_range,
                             const std::array<int64_t, 2>& target) {
    if (img.rank() != 2) {
        throw DimensionError("random_crop_resize_2d: expected H x W image, got " +
                             shape_str(img));
    }
    if (img.extent(0) < 64 || img.extent(1) < 64) {
        throw DataError("random_crop_resize_2d: image " + shape_str(img) +
                        " is smaller than the 64 x 64 minimum");
    }
    if (!(area_fraction_range[0] > 0.0) || area_fraction_range[1] > 1.0 ||
        area_fraction_range[1] < area_fraction_range[0]) {
        throw ConfigError("area fraction range must satisfy 0 < lo <= hi <= 1");
    }
    const int64_t h = img.extent(0);
    const int64_t w = img.extent(1);
    const double frac = stream.uniform(area_fraction_range[0], area_fraction_range[1]);
    const double side = std::sqrt(frac);
    const int64_t crop_h = std::clamp<int64_t>(
        static_cast<int64_t>(std::llround(side * static_cast<double>(h))), 1, h);
    const int64_t crop_w = std::clamp<int64_t>(
        static_cast<int64_t>(std::llround(side * static_cast<double>(w))), 1, w);
    const int64_t oy = stream.uniform_int(0, h - crop_h);
    const int64_t ox = stream.uniform_int(0, w - crop_w);
    const Tensor patch = crop(img, {oy, ox}, {crop_h, crop_w});
    return resize_bilinear(patch, target[0], target[1]);
}

} // namespace p3d
