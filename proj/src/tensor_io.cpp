#include "p3d/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "raw tensor buffers are little-endian; big-endian hosts are unsupported");

namespace p3d {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path tensor_base_path(const fs::path& p) {
    if (p.extension() == ".bin" || p.extension() == ".json") {
        fs::path base = p;
        base.replace_extension();
        return base;
    }
    return p;
}

void save_tensor(const fs::path& base_in, const Tensor& t) {
    if (t.empty()) {
        throw DataError("save_tensor: refusing to write empty tensor");
    }
    const fs::path base = tensor_base_path(base_in);
    fs::path bin = base;
    bin += ".bin";
    fs::path meta = base;
    meta += ".json";

    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("save_tensor: cannot open '" + bin.string() + "' for writing");
    }
    if (t.dtype() == Dtype::F64) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(double) * t.size()));
    } else {
        std::vector<float> narrow(static_cast<size_t>(t.size()));
        for (int64_t i = 0; i < t.size(); ++i) {
            narrow[static_cast<size_t>(i)] = static_cast<float>(t[i]);
        }
        out.write(reinterpret_cast<const char*>(narrow.data()),
                  static_cast<std::streamsize>(sizeof(float) * narrow.size()));
    }
    if (!out) {
        throw DataError("save_tensor: write failed for '" + bin.string() + "'");
    }
    out.close();

    json j;
    j["dtype"] = dtype_name(t.dtype());
    j["shape"] = t.shape();
    j["layout"] = "row-major";
    std::ofstream js(meta, std::ios::trunc);
    if (!js) {
        throw DataError("save_tensor: cannot open '" + meta.string() + "' for writing");
    }
    js << j.dump(2) << "\n";
}

Tensor load_tensor(const fs::path& base_in) {
    const fs::path base = tensor_base_path(base_in);
    fs::path bin = base;
    bin += ".bin";
    fs::path meta = base;
    meta += ".json";

    std::ifstream js(meta);
    if (!js) {
        throw DataError("load_tensor: cannot open sidecar '" + meta.string() + "'");
    }
    json j;
    try {
        js >> j;
    } catch (const json::exception& e) {
        throw DataError("load_tensor: bad sidecar '" + meta.string() + "': " + e.what());
    }
    if (!j.contains("dtype") || !j.contains("shape") || !j.contains("layout")) {
        throw DataError("load_tensor: sidecar '" + meta.string() +
                        "' missing dtype/shape/layout");
    }
    if (j["layout"].get<std::string>() != "row-major") {
        throw DataError("load_tensor: unsupported layout '" +
                        j["layout"].get<std::string>() + "' in '" + meta.string() + "'");
    }
    const Dtype dtype = dtype_from_name(j["dtype"].get<std::string>());
    std::vector<int64_t> shape = j["shape"].get<std::vector<int64_t>>();
    int64_t count = 1;
    for (int64_t e : shape) {
        if (e < 1) throw DataError("load_tensor: non-positive extent in '" + meta.string() + "'");
        count *= e;
    }

    std::ifstream in(bin, std::ios::binary);
    if (!in) {
        throw DataError("load_tensor: cannot open buffer '" + bin.string() + "'");
    }
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<int64_t>(in.tellg());
    in.seekg(0);
    const int64_t scalar = dtype == Dtype::F32 ? 4 : 8;
    if (bytes != count * scalar) {
        throw DataError("load_tensor: '" + bin.string() + "' holds " + std::to_string(bytes) +
                        " bytes, expected " + std::to_string(count * scalar) + " for shape " +
                        shape_str(shape));
    }

    std::vector<double> data(static_cast<size_t>(count));
    if (dtype == Dtype::F64) {
        in.read(reinterpret_cast<char*>(data.data()), bytes);
    } else {
        std::vector<float> narrow(static_cast<size_t>(count));
        in.read(reinterpret_cast<char*>(narrow.data()), bytes);
        for (int64_t i = 0; i < count; ++i) {
            data[static_cast<size_t>(i)] = static_cast<double>(narrow[static_cast<size_t>(i)]);
        }
    }
    if (!in) {
        throw DataError("load_tensor: short read from '" + bin.string() + "'");
    }
    return Tensor::from_data(std::move(shape), std::move(data), dtype);
}

bool is_tensor_sidecar(const fs::path& json_path) {
    std::ifstream js(json_path);
    if (!js) return false;
    json j = json::parse(js, nullptr, false);
    return !j.is_discarded() && j.is_object() && j.contains("dtype") && j.contains("shape") &&
           j.contains("layout");
}

namespace {

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    return tok;
}

int64_t parse_pgm_int(std::istream& in, const std::string& what, const std::string& path) {
    const std::string tok = next_pgm_token(in);
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(tok, &pos);
        if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError("load_pgm: bad " + what + " in '" + path + "'");
    }
}

} // namespace

Tensor load_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("load_pgm: cannot open '" + path.string() + "'");
    }
    const std::string magic = next_pgm_token(in);
    if (magic != "P2" && magic != "P5") {
        throw DataError("load_pgm: '" + path.string() + "' is not a PGM (magic '" + magic + "')");
    }
    const int64_t w = parse_pgm_int(in, "width", path.string());
    const int64_t h = parse_pgm_int(in, "height", path.string());
    const int64_t maxval = parse_pgm_int(in, "maxval", path.string());
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
        throw DataError("load_pgm: bad dimensions/maxval in '" + path.string() + "'");
    }

    Tensor img({h, w});
    const int64_t n = h * w;
    const double inv = 1.0 / static_cast<double>(maxval);
    if (magic == "P2") {
        for (int64_t i = 0; i < n; ++i) {
            const int64_t v = parse_pgm_int(in, "pixel", path.string());
            if (v > maxval) throw DataError("load_pgm: pixel above maxval in '" + path.string() + "'");
            img[i] = static_cast<double>(v) * inv;
        }
    } else {
        in.get(); // single whitespace after maxval
        if (maxval < 256) {
            std::vector<uint8_t> raw(static_cast<size_t>(n));
            in.read(reinterpret_cast<char*>(raw.data()), n);
            if (!in) throw DataError("load_pgm: truncated raster in '" + path.string() + "'");
            for (int64_t i = 0; i < n; ++i) img[i] = raw[static_cast<size_t>(i)] * inv;
        } else {
            // 16-bit P5 rasters are big-endian per the format.
            std::vector<uint8_t> raw(static_cast<size_t>(n) * 2);
            in.read(reinterpret_cast<char*>(raw.data()), n * 2);
            if (!in) throw DataError("load_pgm: truncated raster in '" + path.string() + "'");
            for (int64_t i = 0; i < n; ++i) {
                const uint32_t hi = raw[static_cast<size_t>(i) * 2];
                const uint32_t lo = raw[static_cast<size_t>(i) * 2 + 1];
                const uint32_t v = (hi << 8) | lo;
                if (v > static_cast<uint32_t>(maxval)) {
                    throw DataError("load_pgm: pixel above maxval in '" + path.string() + "'");
                }
                img[i] = static_cast<double>(v) * inv;
            }
        }
    }
    return img;
}

void save_pgm(const fs::path& path, const Tensor& img, int maxval) {
    if (img.rank() != 2) {
        throw DimensionError("save_pgm: expected H x W image, got " + shape_str(img));
    }
    if (maxval != 255 && maxval != 65535) {
        throw ConfigError("save_pgm: maxval must be 255 or 65535");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("save_pgm: cannot open '" + path.string() + "' for writing");
    }
    out << "P5\n" << img.extent(1) << " " << img.extent(0) << "\n" << maxval << "\n";
    const int64_t n = img.size();
    for (int64_t i = 0; i < n; ++i) {
        const double clamped = std::clamp(img[i], 0.0, 1.0);
        const auto q = static_cast<uint32_t>(std::lround(clamped * maxval));
        if (maxval < 256) {
            out.put(static_cast<char>(q));
        } else {
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    if (!out) {
        throw DataError("save_pgm: write failed for '" + path.string() + "'");
    }
}

Tensor load_image_or_tensor(const fs::path& path) {
    if (path.extension() == ".pgm") return load_pgm(path);
    return load_tensor(path);
}

} // namespace p3d
