#pragma once

// Held-out evaluation, synthesis sweeps and feature export on trained networks.

#include "fesr/metrics.hpp"
#include "fesr/trainer.hpp"

#include <filesystem>
#include <vector>

namespace fesr {

/// Recognizer outputs in evaluation mode, batched.
torch::Tensor extract_features(Recognizer& rec, const torch::Tensor& images);
std::vector<int> predict(Recognizer& rec, const torch::Tensor& images);

/// Peak code u(y) with v = 1: +1 on the class, -1 elsewhere.
torch::Tensor peak_codes(const std::vector<int>& classes, int num_classes);

/// K decodes of one face, one per class, at peak intensity. x is [1, c, H, W].
torch::Tensor synthesize_relabel(Networks& nets, const ExperimentConfig& cfg, const torch::Tensor& x);
/// Target-component values of the sweep: `steps` points linearly spaced on [-1, 1].
std::vector<float> sweep_values(int steps);
/// For every class k, `steps` decodes with u_k swept over sweep_values and all other entries -1.
/// Output is class-major [K * steps, c, H, W].
torch::Tensor synthesize_intensity_sweep(Networks& nets, const ExperimentConfig& cfg, const torch::Tensor& x,
                                         int steps = 5);
/// m prior decodes; sample i shows class i mod K at peak intensity.
torch::Tensor synthesize_prior(Networks& nets, const ExperimentConfig& cfg, int m, std::uint64_t seed);

/// One real anchor per subject: the first of its entries in manifest order.
std::vector<std::size_t> verification_anchors(const DatasetManifest& manifest, const std::vector<std::size_t>& entries);

/// For each anchor x: K same-identity pairs (x, decode(g(x), u_k)) and K different-identity pairs
/// (x, decode(z, u_k)), compared through the identity embedder.
std::vector<VerificationPair> build_verification_pairs(Networks& nets, const ExperimentConfig& cfg,
                                                       const TensorDataset& data,
                                                       const std::vector<std::size_t>& anchors, std::uint64_t seed);

struct EvalOptions {
    std::size_t max_synthesis_inputs = 200;
    std::uint64_t seed = 99;
};

/// Accuracy and confusion of R on the fold's test entries; PSNR/SSIM of relabelled test faces
/// against the same subject's real image of the target class (the last such manifest entry);
/// verification rate over one anchor per test subject.
EvalReport evaluate_fold(const ExperimentConfig& cfg, std::int64_t trained_iterations, Networks& nets,
                         const TensorDataset& data, const FoldSplit& split, int fold, const EvalOptions& options = {});

/// Mean ||R_ext(x) - R_ext(decode(z, u(y)))|| over the given real images, one fresh prior
/// sample per image drawn from `seed`, peak intensity.
double real_synthetic_distance(const ExperimentConfig& cfg, Networks& nets, const TensorDataset& data,
                               const std::vector<std::size_t>& entries, std::uint64_t seed);

struct FeatureTable {
    std::vector<int> labels;
    std::vector<int> synthetic;
    std::vector<std::vector<float>> features;
};

/// CSV header `label,synthetic,f0,...`; one row per image.
void export_features(Recognizer& rec, const torch::Tensor& images, const std::vector<int>& labels,
                     const std::vector<int>& synthetic, const std::filesystem::path& path);
FeatureTable read_features(const std::filesystem::path& path);

}  // namespace fesr
