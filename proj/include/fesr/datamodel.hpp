#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fesr {

// Error families map onto the CLI exit codes (2 config, 3 data, 4 numeric).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void log_info(std::string_view message);
void log_warn(std::string_view message);

/// Pixel grid in channel-major layout [c, H, W], values in [-1, 1].
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

    [[nodiscard]] std::size_t size() const noexcept { return pixels.size(); }
    [[nodiscard]] bool same_shape(const Image& other) const noexcept {
        return channels == other.channels && height == other.height && width == other.width;
    }
    [[nodiscard]] float& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    [[nodiscard]] float at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool operator==(const Image&) const = default;
};

/// Linear map [0, 255] -> [-1, 1]. Throws DataError on out-of-range values.
Image rescale_to_unit(std::span<const double> values, int channels, int height, int width);
Image rescale_to_unit(std::span<const std::uint8_t> values, int channels, int height, int width);
/// Inverse of rescale_to_unit, rounded to the nearest byte (values are clamped).
std::vector<std::uint8_t> to_bytes(const Image& image);

struct ExpressionLabel {
    int class_index = 0;
    int num_classes = 0;

    [[nodiscard]] std::vector<float> onehot() const;
    bool operator==(const ExpressionLabel&) const = default;
};

/// Signed intensity representation v * (2y - 1); one entry per class.
struct IntensityCode {
    std::vector<float> u;
};

struct FaceLatent {
    std::vector<float> g;
};

struct Triplet {
    Image x;
    Image x_pr;
    Image x_pf;
    ExpressionLabel label;
};

struct ManifestEntry {
    std::string path;  // as written in the manifest, relative to its directory
    std::string subject_id;
    int class_index = 0;
    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int class_count = 0;
    int image_size = 0;
    int channels = 1;
    std::filesystem::path root;  // directory the relative paths resolve against

    [[nodiscard]] std::filesystem::path resolve(const ManifestEntry& entry) const { return root / entry.path; }
};

struct ExperimentConfig {
    std::string variant = "FESR_JL";
    std::uint64_t seed = 1;

    int image_size = 32;
    int channels = 1;
    int num_classes = 4;
    int latent_dim = 64;

    std::array<double, 6> lambdas{1.0, 10.0, 5.0, 1.0, 1.0, 0.001};
    std::int64_t p_pre = 2000;
    std::int64_t p_max = 6000;

    double learning_rate = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 16;
    double gp_coeff = 10.0;
    int critic_steps = 1;

    // Architecture widths. Paper scale: 64 / 1024 / 256 / 2048 / 512 with the frozen backbone.
    int base_width = 16;
    int max_width = 512;
    int recognizer_width = 64;
    int recognizer_hidden = 512;
    int feature_dim = 512;
    bool frozen_backbone = false;
    double dropout = 0.5;

    int identity_dim = 64;
    int embedder_steps = 400;

    bool same_subject_pairs = false;
    bool identity_loss_on_synthesis = false;
    std::int64_t checkpoint_every = 500;
    int fold_count = 5;

    /// Full-size instantiation at 128x128 RGB with six classes.
    static ExperimentConfig paper_scale();

    /// Canonical flat `key = value` text, keys sorted; parse(serialize()) round-trips exactly.
    [[nodiscard]] std::string serialize() const;
    static ExperimentConfig parse(std::string_view text);
    /// FNV-1a of the canonical text, 16 hex digits.
    [[nodiscard]] std::string hash() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// One message per broken invariant; empty when the config is usable.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

[[nodiscard]] constexpr bool is_power_of_two(int v) noexcept { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace fesr
