#ifndef P3D_DATASET_HPP
#define P3D_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "p3d/augment.hpp"
#include "p3d/pseudo3d.hpp"
#include "p3d/tensor.hpp"

namespace p3d {

enum class Kind { Image2D, Volume3D };

std::string kind_name(Kind k);

struct CorpusEntry {
    std::string path; // relative to the manifest root, '/' separators
    Kind kind = Kind::Image2D;
    std::vector<int64_t> shape;
};

struct RejectEntry {
    std::string path;
    std::string reason;
};

/// Inventory of a corpus directory. Entries are sorted by path, and the
/// stored counts are always recomputed from the entry list, never trusted
/// from a loaded file. A manifest file stores no root: entries resolve
/// relative to the directory the file sits in, so a manifest travels with
/// its corpus.
struct CorpusManifest {
    std::filesystem::path root;
    std::vector<CorpusEntry> entries;
    std::vector<RejectEntry> rejects;

    int64_t count(Kind k) const;

    /// Indices into `entries` holding items of the given kind, ascending.
    std::vector<int64_t> indices_of(Kind k) const;

    std::filesystem::path resolve(int64_t entry_index) const;

    std::string to_json_string() const;
    static CorpusManifest from_json_string(const std::string& text,
                                           std::filesystem::path root);
    static CorpusManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Recursive scan in lexicographic path order. PGM files become 2D
    /// entries; raw+header tensors become 2D (rank 2) or 3D (rank 3)
    /// entries. Unreadable or otherwise unusable candidates land in
    /// `rejects`; unrelated files are ignored.
    static CorpusManifest scan(const std::filesystem::path& dir);
};

/// One epoch's sampling recipe. `mix_ratio` is the fraction of 2D items;
/// the pseudo-3D settings shape the 2D branch of the pipeline.
struct BatchPlan {
    int64_t batch_size = 4;
    int64_t epoch_length = 8; // batches per epoch
    double mix_ratio = 0.5;
    uint64_t seed = 0;
    P3DConfig p3d;
    // Per-view corruption recipe; defaults to the standard one. Only the op
    // lists matter here: the pipeline draws from streams derived from
    // `seed`, never from augment.seed.
    AugmentSpec augment = AugmentSpec::standard(0);

    void validate() const;

    std::string to_json_string() const;
    static BatchPlan from_json_string(const std::string& text);
    static BatchPlan load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct SampleDescriptor {
    int64_t item_index = 0;  // position within the epoch
    int64_t entry_index = 0; // into CorpusManifest::entries
    Kind kind = Kind::Image2D;
    bool replacement = false; // entry already used in an earlier pass
};

/// Expand a plan against a corpus into one descriptor per sample.
///
/// The 2D share is round(mix_ratio * total); kinds are placed by a seeded
/// shuffle of the slot list, and entries of each kind are consumed from
/// repeated seeded shuffles of that kind's entry list, so every entry
/// appears floor- or ceil-balanced before any is repeated. Samples drawn
/// after the first full pass carry replacement = true. Requesting a kind
/// the corpus lacks is a config error.
std::vector<SampleDescriptor> plan_epoch(const CorpusManifest& manifest, const BatchPlan& plan);

/// Two independently corrupted views of one source item, both on the model
/// grid (64 x 64 x 32, serialized 32-bit).
struct ViewPair {
    Tensor a;
    Tensor b;
};

/// Map stored intensities onto [0, 1]. 2D images rescale between their own
/// min and max; 3D volumes are clamped to [-1000, 1000] first. Constant
/// inputs map to all zeros.
Tensor normalize_intensity(const Tensor& t, Kind kind);

/// Deterministically build both views of one scheduled sample: load,
/// normalize, crop (one crop shared by both views), route 2D items through
/// the pseudo-3D transform, then corrupt each view with its own stream.
/// Every stream derives from (plan.seed, item_index), never from wall
/// clock or thread identity.
ViewPair materialize_sample(const CorpusManifest& manifest, const BatchPlan& plan,
                            const SampleDescriptor& desc);

struct BatchRunResult {
    int64_t samples_written = 0;
    std::vector<RejectEntry> rejects; // items that failed to materialize
};

/// Materialize a whole epoch into out_dir: sample_<item>_a / _b tensor
/// pairs plus a schedule.json audit (plan echo, per-sample entry, kind and
/// replacement flag, rejects). Items are processed with parallel_for;
/// outputs are byte-identical for any thread count.
BatchRunResult run_batch(const CorpusManifest& manifest, const BatchPlan& plan,
                         const std::filesystem::path& out_dir);

} // namespace p3d

#endif
