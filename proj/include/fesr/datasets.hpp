#pragma once

#include "fesr/datamodel.hpp"
#include "fesr/labelcodes.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fesr {

/// Reads `#K=<int> size=<int> channels=<int>` followed by `path<TAB>subject<TAB>class` records.
/// Throws DataError naming the offending line.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Decodes every manifest image, in manifest order.
std::vector<Image> load_images(const DatasetManifest& manifest);

struct FoldSplit {
    int fold_count = 0;
    std::map<std::string, int> fold_of_subject;
    std::vector<std::vector<std::size_t>> train;  // entry indices per fold
    std::vector<std::vector<std::size_t>> test;
};

/// Subject-level partition: subjects are shuffled with the seed and dealt round-robin.
FoldSplit make_folds(const DatasetManifest& manifest, int fold_count, std::uint64_t seed);
/// `subject_id<TAB>fold` per line, subjects sorted.
void export_folds(const FoldSplit& split, const std::filesystem::path& path);

/// Same-class partner lookup over a subset of manifest entries.
class PairSampler {
public:
    PairSampler(const DatasetManifest& manifest, std::vector<std::size_t> subset, bool same_subject = false);

    /// Manifest index of a uniformly drawn same-class entry other than the anchor. A singleton
    /// class returns the anchor itself and logs a warning.
    std::size_t partner(std::size_t anchor, Rng& rng) const;

private:
    const DatasetManifest* manifest_;
    bool same_subject_;
    std::map<std::pair<int, std::string>, std::vector<std::size_t>> groups_;
};

/// (x, x_pr) for the anchor entry, drawn from the same class within `entries`.
std::pair<Image, Image> sample_pair(const DatasetManifest& manifest, const std::vector<Image>& images,
                                    const std::vector<std::size_t>& entries, std::size_t anchor, Rng& rng);

struct Batch {
    std::vector<std::size_t> indices;       // manifest indices of x
    std::vector<int> labels;
    std::vector<std::size_t> pair_indices;  // manifest indices of x_pr
};

/// Seeded epoch schedule: batch t of the run is a pure function of (seed, t), so a resumed run
/// sees exactly the batches an uninterrupted run would. The final incomplete batch is dropped.
class BatchSchedule {
public:
    BatchSchedule(const DatasetManifest& manifest, std::vector<std::size_t> entries, int batch_size,
                  std::uint64_t seed, bool same_subject_pairs = false);

    [[nodiscard]] std::size_t batches_per_epoch() const noexcept { return entries_.size() / batch_size_; }
    [[nodiscard]] Batch batch(std::int64_t t) const;

private:
    const std::vector<std::size_t>& permutation(std::int64_t epoch) const;

    const DatasetManifest* manifest_;
    std::vector<std::size_t> entries_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    PairSampler pairs_;
    mutable std::int64_t cached_epoch_ = -1;
    mutable std::vector<std::size_t> cached_perm_;
};

/// Sequential epoch iterator over a BatchSchedule, yielding images as well as indices.
class BatchIterator {
public:
    BatchIterator(const BatchSchedule& schedule, const std::vector<Image>& images)
        : schedule_(&schedule), images_(&images) {}

    struct Item {
        std::vector<Image> images;
        std::vector<int> labels;
        std::vector<Image> pairs;
    };

    /// Next batch of the current epoch, or nullopt at the epoch end (then the next epoch starts).
    std::optional<Item> next();

private:
    const BatchSchedule* schedule_;
    const std::vector<Image>* images_;
    std::int64_t t_ = 0;
    std::size_t in_epoch_ = 0;
};

}  // namespace fesr
