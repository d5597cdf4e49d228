#pragma once

// Procedural cartoon faces: a redistributable, desk-scale stand-in for posed
// expression databases. Identities and expressions are pure parameter sets.

#include "fesr/datamodel.hpp"
#include "fesr/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fesr {

struct ToyIdentity {
    float face_aspect = 0.9f;       // [0.78, 1.0]  head width / head height
    float eye_spacing = 0.32f;      // [0.26, 0.38] half distance between eye centers
    float eye_size = 0.095f;        // [0.075, 0.12]
    float brow_baseline = -0.36f;   // [-0.42, -0.32]
    float skin_tone = 0.35f;        // [0.05, 0.65]
    float mouth_width = 0.26f;      // [0.2, 0.32]
    float resting_curve = 0.0f;     // [-0.06, 0.06] resting smile or frown
    float resting_brow = 0.0f;      // [-0.12, 0.12] resting brow slope
    float resting_eye = 0.6f;       // [0.5, 0.75] resting eye openness

    /// Parameters drawn uniformly from the documented ranges.
    static ToyIdentity sample(std::uint64_t seed, std::uint64_t identity_index);
};

struct ToyExpressionSpec {
    int class_index = 0;
    float mouth_curvature = 0.0f;
    float mouth_open = 0.0f;
    float mouth_asym = 0.0f;
    float brow_angle = 0.0f;
    float brow_raise = 0.0f;
    float eye_openness = 0.0f;   // additive change of the eye openness
    float intensity = 1.0f;      // 0 renders the neutral geometry

    /// The extreme geometry of a class (0..6: happy, sad, surprise, angry, disgust, fear,
    /// contempt), scaled by intensity.
    static ToyExpressionSpec for_class(int class_index, float intensity);
};

constexpr int kMaxToyClasses = 7;
const char* toy_class_name(int class_index);

kernels::FaceGeometry face_geometry(const ToyIdentity& identity, const ToyExpressionSpec& expr);

/// Rasterizes one face; size must be 32, 64 or 128 and channels 1 or 3.
Image render(const ToyIdentity& identity, const ToyExpressionSpec& expr, int size, int channels = 1);

struct ToyDatasetOptions {
    int identities = 200;
    int num_classes = 4;
    std::vector<float> intensities{0.6f, 0.8f, 1.0f};
    int size = 32;
    int channels = 1;
    std::uint64_t seed = 7;
    float noise = 0.02f;  // uniform per-pixel noise amplitude
};

/// Writes identities x classes x intensities PNG files plus `manifest.tsv` into out_dir.
DatasetManifest generate_dataset(const ToyDatasetOptions& options, const std::filesystem::path& out_dir);

/// Same images held in memory, in manifest order (used by tests and in-process runs).
std::vector<Image> render_dataset_images(const ToyDatasetOptions& options);

std::string toy_subject_id(int identity_index);

}  // namespace fesr
