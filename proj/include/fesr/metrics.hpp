#pragma once

#include "fesr/datamodel.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fesr {

constexpr double kPsnrCap = 99.0;

/// PSNR in dB on [0, 1]-mapped pixels; identical images return kPsnrCap.
double psnr(const Image& a, const Image& b);
/// Mean SSIM, 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2 on [0, 1] pixels.
double ssim(const Image& a, const Image& b);

double accuracy(std::span<const int> predictions, std::span<const int> labels);
/// counts[true][predicted]
std::vector<std::vector<std::int64_t>> confusion(std::span<const int> predictions, std::span<const int> labels,
                                                 int num_classes);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct VerificationPair {
    std::vector<float> a;
    std::vector<float> b;
    bool same_identity = false;
};

struct ScoredPair {
    double similarity = 0.0;
    bool same_identity = false;
};

struct VerificationResult {
    double rate = 0.0;
    double threshold = 0.0;  // predict "same" when similarity >= threshold
};

/// Best-threshold accuracy over every observed similarity (plus "reject all").
VerificationResult verification_rate(std::vector<ScoredPair> pairs);
VerificationResult verification_rate(const std::vector<VerificationPair>& pairs);

struct EvalReport {
    std::string variant;
    int fold = 0;
    int num_classes = 0;
    std::vector<double> fold_accuracies;
    double accuracy_mean = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::vector<std::int64_t>> confusion_matrix;
    std::optional<double> psnr_mean;
    std::optional<double> ssim_mean;
    std::optional<VerificationResult> verification;
    std::vector<std::string> notes;

    void write_csv(const std::filesystem::path& path) const;
    void write_summary(const std::filesystem::path& path) const;
    /// Reads the `metric,value` rows written by write_csv (variant and accuracy are enough for plots).
    static EvalReport read_csv(const std::filesystem::path& path);
};

/// Fills accuracy, per-class accuracy and the confusion matrix from predictions.
void fill_classification(EvalReport& report, std::span<const int> predictions, std::span<const int> labels);

}  // namespace fesr
