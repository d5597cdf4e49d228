#pragma once

#include "fesr/datasets.hpp"
#include "fesr/toyfaces.hpp"
#include "fesr/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

namespace fesr::test {

/// In-memory toy dataset with a manifest whose paths are never read.
struct ToySet {
    DatasetManifest manifest;
    std::vector<Image> images;
    TensorDataset data;
    FoldSplit split;
};

inline std::unique_ptr<ToySet> make_toy(int identities, int classes, std::vector<float> intensities,
                                        int folds = 5, std::uint64_t seed = 7) {
    auto s = std::make_unique<ToySet>();
    ToyDatasetOptions o;
    o.identities = identities;
    o.num_classes = classes;
    o.intensities = std::move(intensities);
    o.seed = seed;
    s->images = render_dataset_images(o);
    s->manifest.class_count = classes;
    s->manifest.image_size = o.size;
    s->manifest.channels = o.channels;
    for (int id = 0; id < identities; ++id) {
        for (int c = 0; c < classes; ++c) {
            for (std::size_t j = 0; j < o.intensities.size(); ++j) {
                s->manifest.entries.push_back({"mem/" + std::to_string(id) + "_" + std::to_string(c) + "_" +
                                                   std::to_string(j) + ".png",
                                               toy_subject_id(id), c});
            }
        }
    }
    s->data = TensorDataset(s->manifest, s->images);
    s->split = make_folds(s->manifest, folds, seed);
    return s;
}

/// Small widths so a training step takes a few milliseconds.
inline ExperimentConfig tiny_config(const std::string& variant, std::int64_t p_pre, std::int64_t p_max) {
    ExperimentConfig c;
    c.variant = variant;
    c.p_pre = p_pre;
    c.p_max = p_max;
    c.num_classes = 4;
    c.batch_size = 8;
    c.base_width = 8;
    c.max_width = 64;
    c.recognizer_width = 16;
    c.recognizer_hidden = 64;
    c.feature_dim = 32;
    c.latent_dim = 16;
    c.identity_dim = 16;
    c.embedder_steps = 10;
    c.checkpoint_every = 1000;
    return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("fesr_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fesr::test
