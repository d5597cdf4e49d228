#include "fesr/metrics.hpp"

#include "fesr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fesr {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("psnr: image shapes differ");
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        // [-1, 1] -> [0, 1] halves every difference
        const double d = 0.5 * (static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]));
        sse += d * d;
    }
    if (sse == 0.0) {
        return kPsnrCap;
    }
    const double mse = sse / static_cast<double>(a.size());
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) { return kernels::ssim_parallel(a, b); }

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("accuracy: length mismatch");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("accuracy: empty input");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<std::vector<std::int64_t>> confusion(std::span<const int> predictions, std::span<const int> labels,
                                                 int num_classes) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("confusion: length mismatch");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("confusion: empty input");
    }
    std::vector<std::vector<std::int64_t>> m(static_cast<std::size_t>(num_classes),
                                             std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        m.at(static_cast<std::size_t>(labels[i])).at(static_cast<std::size_t>(predictions[i])) += 1;
    }
    return m;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch");
    }
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    const double denom = std::sqrt(aa) * std::sqrt(bb);
    return denom > 0.0 ? ab / denom : 0.0;
}

VerificationResult verification_rate(std::vector<ScoredPair> pairs) {
    const auto positives = static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const ScoredPair& p) { return p.same_identity; }));
    const std::size_t negatives = pairs.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw std::invalid_argument("verification_rate: need at least one positive and one negative pair");
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const ScoredPair& x, const ScoredPair& y) { return x.similarity > y.similarity; });

    // Threshold above every similarity: everything rejected, all negatives correct.
    std::size_t best_correct = negatives;
    double best_threshold = std::numeric_limits<double>::infinity();
    std::size_t accepted_pos = 0;
    std::size_t accepted_neg = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        const double s = pairs[i].similarity;
        while (i < pairs.size() && pairs[i].similarity == s) {
            (pairs[i].same_identity ? accepted_pos : accepted_neg) += 1;
            ++i;
        }
        const std::size_t correct = accepted_pos + (negatives - accepted_neg);
        if (correct > best_correct) {
            best_correct = correct;
            best_threshold = s;
        }
    }
    return {static_cast<double>(best_correct) / static_cast<double>(pairs.size()), best_threshold};
}

VerificationResult verification_rate(const std::vector<VerificationPair>& pairs) {
    std::vector<ScoredPair> scored;
    scored.reserve(pairs.size());
    for (const auto& p : pairs) {
        scored.push_back({cosine_similarity(p.a, p.b), p.same_identity});
    }
    return verification_rate(std::move(scored));
}

void fill_classification(EvalReport& report, std::span<const int> predictions, std::span<const int> labels) {
    const double acc = accuracy(predictions, labels);
    report.fold_accuracies = {acc};
    report.accuracy_mean = acc;
    report.confusion_matrix = confusion(predictions, labels, report.num_classes);
    report.per_class_accuracy.assign(static_cast<std::size_t>(report.num_classes), 0.0);
    for (std::size_t k = 0; k < report.confusion_matrix.size(); ++k) {
        const auto& row = report.confusion_matrix[k];
        const auto total = std::accumulate(row.begin(), row.end(), std::int64_t{0});
        report.per_class_accuracy[k] = total > 0 ? static_cast<double>(row[k]) / static_cast<double>(total) : 0.0;
    }
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.precision(9);
    out << "metric,value\n";
    out << "variant," << variant << '\n';
    out << "fold," << fold << '\n';
    out << "accuracy_mean," << accuracy_mean << '\n';
    for (std::size_t i = 0; i < fold_accuracies.size(); ++i) {
        out << "accuracy_fold_" << i << ',' << fold_accuracies[i] << '\n';
    }
    for (std::size_t k = 0; k < per_class_accuracy.size(); ++k) {
        out << "accuracy_class_" << k << ',' << per_class_accuracy[k] << '\n';
    }
    for (std::size_t r = 0; r < confusion_matrix.size(); ++r) {
        for (std::size_t c = 0; c < confusion_matrix[r].size(); ++c) {
            out << "confusion_" << r << '_' << c << ',' << confusion_matrix[r][c] << '\n';
        }
    }
    if (psnr_mean) {
        out << "psnr_mean," << *psnr_mean << '\n';
    }
    if (ssim_mean) {
        out << "ssim_mean," << *ssim_mean << '\n';
    }
    if (verification) {
        out << "verification_rate," << verification->rate << '\n';
        out << "verification_threshold," << verification->threshold << '\n';
    }
}

void EvalReport::write_summary(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "variant: " << variant << "\nfold: " << fold << "\naccuracy: " << accuracy_mean << '\n';
    out << "per-class accuracy:";
    for (double a : per_class_accuracy) {
        out << ' ' << a;
    }
    out << "\nconfusion (rows = true class, columns = predicted):\n";
    for (const auto& row : confusion_matrix) {
        for (auto v : row) {
            out << ' ' << v;
        }
        out << '\n';
    }
    if (psnr_mean) {
        out << "psnr: " << *psnr_mean << " dB\n";
    }
    if (ssim_mean) {
        out << "ssim: " << *ssim_mean << '\n';
    }
    if (verification) {
        out << "verification rate: " << verification->rate << " (threshold " << verification->threshold << ")\n";
    }
    for (const auto& n : notes) {
        out << "note: " << n << '\n';
    }
}

EvalReport EvalReport::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    EvalReport r;
    std::string line;
    std::getline(in, line);
    if (line != "metric,value") {
        throw DataError(path.string() + ": not an evaluation report");
    }
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw DataError(path.string() + ": malformed row '" + line + "'");
        }
        const auto key = line.substr(0, comma);
        const auto value = line.substr(comma + 1);
        if (key == "variant") {
            r.variant = value;
        } else if (key == "fold") {
            r.fold = std::stoi(value);
        } else if (key == "accuracy_mean") {
            r.accuracy_mean = std::stod(value);
        } else if (key.starts_with("accuracy_fold_")) {
            r.fold_accuracies.push_back(std::stod(value));
        } else if (key.starts_with("accuracy_class_")) {
            r.per_class_accuracy.push_back(std::stod(value));
        } else if (key == "psnr_mean") {
            r.psnr_mean = std::stod(value);
        } else if (key == "ssim_mean") {
            r.ssim_mean = std::stod(value);
        } else if (key == "verification_rate") {
            r.verification = VerificationResult{std::stod(value), 0.0};
        }
    }
    r.num_classes = static_cast<int>(r.per_class_accuracy.size());
    return r;
}

}  // namespace fesr
