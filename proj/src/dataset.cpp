#include "p3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "p3d/parallel.hpp"
#include "p3d/rng.hpp"
#include "p3d/tensor_io.hpp"

namespace p3d {

using nlohmann::json;

std::string kind_name(Kind k) {
    return k == Kind::Image2D ? "2d" : "3d";
}

namespace {

Kind kind_from_name(const std::string& name) {
    if (name == "2d") return Kind::Image2D;
    if (name == "3d") return Kind::Volume3D;
    throw DataError("unknown corpus kind '" + name + "'");
}

} // namespace

int64_t CorpusManifest::count(Kind k) const {
    return static_cast<int64_t>(
        std::count_if(entries.begin(), entries.end(),
                      [&](const CorpusEntry& e) { return e.kind == k; }));
}

std::vector<int64_t> CorpusManifest::indices_of(Kind k) const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].kind == k) out.push_back(static_cast<int64_t>(i));
    }
    return out;
}

std::filesystem::path CorpusManifest::resolve(int64_t entry_index) const {
    return root / entries.at(static_cast<size_t>(entry_index)).path;
}

std::string CorpusManifest::to_json_string() const {
    json j;
    j["counts"] = {{"2d", count(Kind::Image2D)}, {"3d", count(Kind::Volume3D)}};
    j["entries"] = json::array();
    for (const auto& e : entries) {
        j["entries"].push_back({{"path", e.path}, {"kind", kind_name(e.kind)}, {"shape", e.shape}});
    }
    j["rejects"] = json::array();
    for (const auto& r : rejects) {
        j["rejects"].push_back({{"path", r.path}, {"reason", r.reason}});
    }
    return j.dump(2);
}

CorpusManifest CorpusManifest::from_json_string(const std::string& text,
                                                std::filesystem::path root) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw DataError("corpus manifest is not a JSON object");
    }
    CorpusManifest m;
    m.root = std::move(root);
    try {
        for (const auto& e : j.value("entries", json::array())) {
            CorpusEntry entry;
            entry.path = e.at("path").get<std::string>();
            entry.kind = kind_from_name(e.at("kind").get<std::string>());
            entry.shape = e.value("shape", std::vector<int64_t>{});
            m.entries.push_back(std::move(entry));
        }
        for (const auto& r : j.value("rejects", json::array())) {
            m.rejects.push_back({r.at("path").get<std::string>(),
                                 r.value("reason", std::string{})});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed corpus manifest: ") + e.what());
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const CorpusEntry& a, const CorpusEntry& b) { return a.path < b.path; });
    return m;
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open corpus manifest '" + path.string() + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text, path.parent_path());
}

void CorpusManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write corpus manifest '" + path.string() + "'");
    }
    out << to_json_string() << "\n";
}

CorpusManifest CorpusManifest::scan(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("corpus root '" + dir.string() + "' is not a directory");
    }
    CorpusManifest m;
    m.root = dir;

    std::vector<std::filesystem::path> files;
    for (const auto& de : std::filesystem::recursive_directory_iterator(dir)) {
        if (de.is_regular_file()) files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        const std::string rel = std::filesystem::relative(file, dir).generic_string();
        const std::string ext = file.extension().string();
        if (ext == ".pgm") {
            try {
                const Tensor img = load_pgm(file);
                m.entries.push_back({rel, Kind::Image2D, img.shape()});
            } catch (const Error& e) {
                m.rejects.push_back({rel, e.what()});
            }
        } else if (ext == ".json") {
            if (!is_tensor_sidecar(file)) continue; // plan/spec/other JSON, not corpus data
            try {
                const Tensor t = load_tensor(file);
                if (t.rank() == 2) {
                    m.entries.push_back({rel, Kind::Image2D, t.shape()});
                } else if (t.rank() == 3) {
                    m.entries.push_back({rel, Kind::Volume3D, t.shape()});
                } else {
                    m.rejects.push_back({rel, "rank " + std::to_string(t.rank()) +
                                                  " tensor is neither a 2D image nor a 3D volume"});
                }
            } catch (const Error& e) {
                m.rejects.push_back({rel, e.what()});
            }
        }
        // .bin payloads travel with their sidecar; everything else is ignored.
    }
    return m;
}

void BatchPlan::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epoch_length < 1) throw ConfigError("epoch_length must be >= 1");
    if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) {
        throw ConfigError("mix_ratio must lie in [0, 1], got " + std::to_string(mix_ratio));
    }
    p3d.validate();
    augment.validate();
}

std::string BatchPlan::to_json_string() const {
    json j;
    j["batch_size"] = batch_size;
    j["epoch_length"] = epoch_length;
    j["mix_ratio"] = mix_ratio;
    j["seed"] = seed;
    j["p3d"] = {{"window", p3d.window}, {"stride", p3d.stride}};
    j["augment"] = json::parse(augment.to_json_string());
    return j.dump(2);
}

BatchPlan BatchPlan::from_json_string(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ConfigError("batch plan is not a JSON object");
    }
    BatchPlan plan;
    try {
        plan.batch_size = j.value("batch_size", plan.batch_size);
        plan.epoch_length = j.value("epoch_length", plan.epoch_length);
        plan.mix_ratio = j.value("mix_ratio", plan.mix_ratio);
        plan.seed = j.value("seed", plan.seed);
        if (j.contains("p3d")) {
            plan.p3d.window = j["p3d"].value("window", plan.p3d.window);
            plan.p3d.stride = j["p3d"].value("stride", plan.p3d.stride);
        }
        if (j.contains("augment")) {
            plan.augment = AugmentSpec::from_json_string(j["augment"].dump());
        } else {
            plan.augment = AugmentSpec::standard(plan.seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed batch plan: ") + e.what());
    }
    plan.validate();
    return plan;
}

BatchPlan BatchPlan::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open batch plan '" + path.string() + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

void BatchPlan::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write batch plan '" + path.string() + "'");
    }
    out << to_json_string() << "\n";
}

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, rng::Stream& stream) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
        const int64_t j = stream.uniform_int(0, i);
        std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
}

// Entry picks for one kind: whole-list shuffles concatenated until `count`
// picks exist, so entry usage stays balanced. Picks past the first pass are
// flagged as repeats.
std::vector<std::pair<int64_t, bool>> pick_entries(const std::vector<int64_t>& pool,
                                                   int64_t count, rng::Stream& stream) {
    std::vector<std::pair<int64_t, bool>> picks;
    picks.reserve(static_cast<size_t>(count));
    std::vector<int64_t> order = pool;
    int64_t pass = 0;
    while (static_cast<int64_t>(picks.size()) < count) {
        shuffle_in_place(order, stream);
        for (int64_t idx : order) {
            if (static_cast<int64_t>(picks.size()) == count) break;
            picks.emplace_back(idx, pass > 0);
        }
        ++pass;
    }
    return picks;
}

} // namespace

std::vector<SampleDescriptor> plan_epoch(const CorpusManifest& manifest, const BatchPlan& plan) {
    plan.validate();
    const int64_t total = plan.batch_size * plan.epoch_length;
    const auto n2d = static_cast<int64_t>(std::llround(plan.mix_ratio * static_cast<double>(total)));
    const int64_t n3d = total - n2d;

    const auto pool2d = manifest.indices_of(Kind::Image2D);
    const auto pool3d = manifest.indices_of(Kind::Volume3D);
    if (n2d > 0 && pool2d.empty()) {
        throw ConfigError("plan requests 2D samples but the corpus has no 2D entries");
    }
    if (n3d > 0 && pool3d.empty()) {
        throw ConfigError("plan requests 3D samples but the corpus has no 3D entries");
    }

    std::vector<Kind> slots;
    slots.reserve(static_cast<size_t>(total));
    slots.insert(slots.end(), static_cast<size_t>(n2d), Kind::Image2D);
    slots.insert(slots.end(), static_cast<size_t>(n3d), Kind::Volume3D);
    auto mix_stream = rng::derive_stream(plan.seed, rng::kTagPlanMix);
    shuffle_in_place(slots, mix_stream);

    auto pick2d_stream = rng::derive_stream(plan.seed, rng::kTagPlanPick, 2);
    auto pick3d_stream = rng::derive_stream(plan.seed, rng::kTagPlanPick, 3);
    auto picks2d = n2d > 0 ? pick_entries(pool2d, n2d, pick2d_stream)
                           : std::vector<std::pair<int64_t, bool>>{};
    auto picks3d = n3d > 0 ? pick_entries(pool3d, n3d, pick3d_stream)
                           : std::vector<std::pair<int64_t, bool>>{};

    std::vector<SampleDescriptor> schedule;
    schedule.reserve(static_cast<size_t>(total));
    size_t next2d = 0;
    size_t next3d = 0;
    for (int64_t item = 0; item < total; ++item) {
        const Kind kind = slots[static_cast<size_t>(item)];
        const auto& [entry, repeat] =
            kind == Kind::Image2D ? picks2d[next2d++] : picks3d[next3d++];
        schedule.push_back({item, entry, kind, repeat});
    }
    return schedule;
}

Tensor normalize_intensity(const Tensor& t, Kind kind) {
    Tensor out = t;
    if (kind == Kind::Volume3D) {
        for (int64_t i = 0; i < out.size(); ++i) {
            out[i] = std::clamp(out[i], -1000.0, 1000.0);
        }
    }
    const double lo = min_value(out);
    const double hi = max_value(out);
    if (!(hi > lo)) {
        return Tensor(out.shape(), 0.0, out.dtype());
    }
    const double range = hi - lo;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = (out[i] - lo) / range;
    }
    return out;
}

ViewPair materialize_sample(const CorpusManifest& manifest, const BatchPlan& plan,
                            const SampleDescriptor& desc) {
    const auto path = manifest.resolve(desc.entry_index);
    const auto item = static_cast<uint64_t>(desc.item_index);

    Tensor base; // one cropped volume shared by both views
    if (desc.kind == Kind::Volume3D) {
        Tensor vol = load_tensor(tensor_base_path(path));
        if (vol.rank() != 3) {
            throw DataError("entry '" + manifest.entries[static_cast<size_t>(desc.entry_index)].path +
                            "' is listed as 3D but has shape " + shape_str(vol));
        }
        vol = normalize_intensity(vol, Kind::Volume3D);
        auto crop_stream = rng::derive_stream(plan.seed, item, rng::kTagCrop);
        base = random_crop_3d(vol, crop_stream);
    } else {
        Tensor img = load_image_or_tensor(path);
        if (img.rank() != 2) {
            throw DataError("entry '" + manifest.entries[static_cast<size_t>(desc.entry_index)].path +
                            "' is listed as 2D but has shape " + shape_str(img));
        }
        img = normalize_intensity(img, Kind::Image2D);
        auto crop_stream = rng::derive_stream(plan.seed, item, rng::kTagCrop);
        Tensor resized = random_crop_resize_2d(img, crop_stream);
        resized = center_crop_compatible(resized, plan.p3d);
        base = pseudo3d_for_model(resized, plan.p3d, kModelInputShape);
    }

    ViewPair pair;
    for (int view = 0; view < 2; ++view) {
        auto view_stream =
            rng::derive_stream(plan.seed, item, rng::kTagView, static_cast<uint64_t>(view));
        Tensor v = apply_global_ops(base, plan.augment, view_stream);
        v = apply_local_ops(v, plan.augment, view_stream);
        v.set_dtype(Dtype::F32);
        (view == 0 ? pair.a : pair.b) = std::move(v);
    }
    return pair;
}

namespace {

std::string sample_stem(int64_t item, char view) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05lld_%c", static_cast<long long>(item), view);
    return buf;
}

} // namespace

BatchRunResult run_batch(const CorpusManifest& manifest, const BatchPlan& plan,
                         const std::filesystem::path& out_dir) {
    const auto schedule = plan_epoch(manifest, plan);
    std::filesystem::create_directories(out_dir);

    std::vector<char> ok(schedule.size(), 0);
    std::vector<std::string> failure(schedule.size());
    std::mutex failure_mutex;

    parallel_for(static_cast<int64_t>(schedule.size()), [&](int64_t i) {
        const auto& desc = schedule[static_cast<size_t>(i)];
        try {
            const ViewPair pair = materialize_sample(manifest, plan, desc);
            save_tensor(out_dir / sample_stem(desc.item_index, 'a'), pair.a);
            save_tensor(out_dir / sample_stem(desc.item_index, 'b'), pair.b);
            ok[static_cast<size_t>(i)] = 1;
        } catch (const Error& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            failure[static_cast<size_t>(i)] = std::string(e.code()) + ": " + e.what();
        }
    });

    BatchRunResult result;
    json audit;
    audit["plan"] = json::parse(plan.to_json_string());
    audit["samples"] = json::array();
    json rejects = json::array();
    for (size_t i = 0; i < schedule.size(); ++i) {
        const auto& desc = schedule[i];
        const auto& entry = manifest.entries[static_cast<size_t>(desc.entry_index)];
        json row = {{"item_index", desc.item_index},
                    {"entry", entry.path},
                    {"kind", kind_name(desc.kind)},
                    {"replacement", desc.replacement},
                    {"written", static_cast<bool>(ok[i])}};
        audit["samples"].push_back(row);
        if (ok[i]) {
            ++result.samples_written;
        } else {
            result.rejects.push_back({entry.path, failure[i]});
            rejects.push_back({{"item_index", desc.item_index},
                               {"entry", entry.path},
                               {"reason", failure[i]}});
        }
    }
    audit["rejects"] = rejects;
    audit["samples_written"] = result.samples_written;

    std::ofstream out(out_dir / "schedule.json", std::ios::trunc);
    if (!out) {
        throw DataError("cannot write schedule to '" + (out_dir / "schedule.json").string() + "'");
    }
    out << audit.dump(2) << "\n";
    return result;
}

} // namespace p3d
