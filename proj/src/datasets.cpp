#include "fesr/datasets.hpp"

#include "fesr/image_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace fesr {

namespace {

int parse_int(std::string_view text, const std::string& what) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError(what + ": cannot parse integer '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    while (true) {
        const auto p = s.find(sep);
        out.push_back(s.substr(0, p));
        if (p == std::string_view::npos) {
            return out;
        }
        s = s.substr(p + 1);
    }
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("manifest not found: " + path.string());
    }
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    if (!std::getline(in, line) || !line.starts_with("#")) {
        throw DataError(path.string() + ":1: missing '#K=<int> size=<int> channels=<int>' header");
    }
    {
        bool have_k = false;
        bool have_size = false;
        std::istringstream hs(line.substr(1));
        std::string token;
        while (hs >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos) {
                throw DataError(path.string() + ":1: malformed header token '" + token + "'");
            }
            const auto key = token.substr(0, eq);
            const int value = parse_int(std::string_view(token).substr(eq + 1), path.string() + ":1");
            if (key == "K") {
                m.class_count = value;
                have_k = true;
            } else if (key == "size") {
                m.image_size = value;
                have_size = true;
            } else if (key == "channels") {
                m.channels = value;
            } else {
                throw DataError(path.string() + ":1: unknown header key '" + key + "'");
            }
        }
        if (!have_k || !have_size || m.class_count < 1 || m.image_size < 1 ||
            (m.channels != 1 && m.channels != 3)) {
            throw DataError(path.string() + ":1: header needs positive K and size, channels 1 or 3");
        }
    }

    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split(line, '\t');
        if (fields.size() != 3) {
            throw DataError(where + ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
        }
        ManifestEntry e{std::string(fields[0]), std::string(fields[1]), parse_int(fields[2], where)};
        if (e.path.empty()) {
            throw DataError(where + ": empty path");
        }
        if (e.subject_id.empty()) {
            throw DataError(where + ": empty subject_id");
        }
        if (e.class_index < 0 || e.class_index >= m.class_count) {
            throw DataError(where + ": class index " + std::to_string(e.class_index) + " outside [0, " +
                            std::to_string(m.class_count) + ")");
        }
        if (!seen.insert(e.path).second) {
            throw DataError(where + ": duplicate path '" + e.path + "'");
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write manifest " + path.string());
    }
    out << "#K=" << manifest.class_count << " size=" << manifest.image_size << " channels=" << manifest.channels
        << '\n';
    for (const auto& e : manifest.entries) {
        out << e.path << '\t' << e.subject_id << '\t' << e.class_index << '\n';
    }
}

std::vector<Image> load_images(const DatasetManifest& manifest) {
    std::vector<Image> images;
    images.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        auto img = read_png(manifest.resolve(e));
        if (img.height != manifest.image_size || img.width != manifest.image_size ||
            img.channels != manifest.channels) {
            throw DataError(e.path + ": image shape does not match the manifest header");
        }
        images.push_back(std::move(img));
    }
    return images;
}

FoldSplit make_folds(const DatasetManifest& manifest, int fold_count, std::uint64_t seed) {
    std::vector<std::string> subjects;
    {
        std::set<std::string> unique;
        for (const auto& e : manifest.entries) {
            unique.insert(e.subject_id);
        }
        subjects.assign(unique.begin(), unique.end());
    }
    if (fold_count < 1 || static_cast<std::size_t>(fold_count) > subjects.size()) {
        throw DataError("fold count " + std::to_string(fold_count) + " exceeds the " +
                        std::to_string(subjects.size()) + " distinct subjects");
    }
    auto rng = make_rng(seed, 0xf01d);
    std::shuffle(subjects.begin(), subjects.end(), rng);

    FoldSplit split;
    split.fold_count = fold_count;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        split.fold_of_subject[subjects[i]] = static_cast<int>(i % static_cast<std::size_t>(fold_count));
    }
    split.train.resize(static_cast<std::size_t>(fold_count));
    split.test.resize(static_cast<std::size_t>(fold_count));
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const int fold = split.fold_of_subject.at(manifest.entries[i].subject_id);
        for (int f = 0; f < fold_count; ++f) {
            (f == fold ? split.test : split.train)[static_cast<std::size_t>(f)].push_back(i);
        }
    }
    return split;
}

void export_folds(const FoldSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write fold assignments to " + path.string());
    }
    for (const auto& [subject, fold] : split.fold_of_subject) {
        out << subject << '\t' << fold << '\n';
    }
}

PairSampler::PairSampler(const DatasetManifest& manifest, std::vector<std::size_t> subset, bool same_subject)
    : manifest_(&manifest), same_subject_(same_subject) {
    for (std::size_t idx : subset) {
        const auto& e = manifest.entries.at(idx);
        groups_[{e.class_index, same_subject ? e.subject_id : std::string{}}].push_back(idx);
    }
}

std::size_t PairSampler::partner(std::size_t anchor, Rng& rng) const {
    const auto& e = manifest_->entries.at(anchor);
    const auto it = groups_.find({e.class_index, same_subject_ ? e.subject_id : std::string{}});
    if (it == groups_.end()) {
        throw DataError("pair sampling: anchor entry is not part of the sampled subset");
    }
    const auto& group = it->second;
    const auto pos = std::find(group.begin(), group.end(), anchor);
    if (group.size() < 2 || pos == group.end()) {
        log_warn("class " + std::to_string(e.class_index) + " has a single image; pairing '" + e.path +
                 "' with itself");
        return anchor;
    }
    std::uniform_int_distribution<std::size_t> dist(0, group.size() - 2);
    std::size_t r = dist(rng);
    if (r >= static_cast<std::size_t>(pos - group.begin())) {
        ++r;
    }
    return group[r];
}

std::pair<Image, Image> sample_pair(const DatasetManifest& manifest, const std::vector<Image>& images,
                                    const std::vector<std::size_t>& entries, std::size_t anchor, Rng& rng) {
    const PairSampler sampler(manifest, entries);
    const std::size_t other = sampler.partner(anchor, rng);
    return {images.at(anchor), images.at(other)};
}

BatchSchedule::BatchSchedule(const DatasetManifest& manifest, std::vector<std::size_t> entries, int batch_size,
                             std::uint64_t seed, bool same_subject_pairs)
    : manifest_(&manifest),
      entries_(std::move(entries)),
      batch_size_(static_cast<std::size_t>(batch_size)),
      seed_(seed),
      pairs_(manifest, entries_, same_subject_pairs) {
    if (batch_size < 1) {
        throw DataError("batch size must be >= 1");
    }
    if (entries_.empty()) {
        throw DataError("cannot batch an empty entry list");
    }
    if (entries_.size() < batch_size_) {
        throw DataError("fewer entries (" + std::to_string(entries_.size()) + ") than one batch (" +
                        std::to_string(batch_size) + ")");
    }
}

const std::vector<std::size_t>& BatchSchedule::permutation(std::int64_t epoch) const {
    if (epoch != cached_epoch_) {
        cached_perm_ = entries_;
        auto rng = make_rng(seed_, 0xe0000000ull + static_cast<std::uint64_t>(epoch));
        std::shuffle(cached_perm_.begin(), cached_perm_.end(), rng);
        cached_epoch_ = epoch;
    }
    return cached_perm_;
}

Batch BatchSchedule::batch(std::int64_t t) const {
    const auto per_epoch = static_cast<std::int64_t>(batches_per_epoch());
    const auto& perm = permutation(t / per_epoch);
    const auto offset = static_cast<std::size_t>(t % per_epoch) * batch_size_;
    auto rng = make_rng(seed_, 0xba000000ull + static_cast<std::uint64_t>(t));
    Batch b;
    for (std::size_t i = 0; i < batch_size_; ++i) {
        const std::size_t idx = perm[offset + i];
        b.indices.push_back(idx);
        b.labels.push_back(manifest_->entries[idx].class_index);
        b.pair_indices.push_back(pairs_.partner(idx, rng));
    }
    return b;
}

std::optional<BatchIterator::Item> BatchIterator::next() {
    if (in_epoch_ == schedule_->batches_per_epoch()) {
        in_epoch_ = 0;
        return std::nullopt;
    }
    const auto b = schedule_->batch(t_++);
    ++in_epoch_;
    Item item;
    item.labels = b.labels;
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
        item.images.push_back(images_->at(b.indices[i]));
        item.pairs.push_back(images_->at(b.pair_indices[i]));
    }
    return item;
}

}  // namespace fesr
