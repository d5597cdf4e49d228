#include "fesr/evaluation.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fesr {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kEvalBatch = 128;

class EvalMode {
public:
    explicit EvalMode(torch::nn::Module& m) : m_(m), was_training_(m.is_training()) { m_.eval(); }
    ~EvalMode() { m_.train(was_training_); }

private:
    torch::nn::Module& m_;
    bool was_training_;
};

torch::Tensor index_tensor(const std::vector<std::size_t>& idx) {
    std::vector<std::int64_t> v(idx.begin(), idx.end());
    return torch::tensor(v, torch::kLong);
}

torch::Tensor prior_batch(std::size_t b, int n, std::uint64_t seed) {
    auto rng = make_rng(seed, 0x9e1a);
    std::vector<float> flat;
    for (std::size_t i = 0; i < b; ++i) {
        const auto z = sample_prior(n, rng);
        flat.insert(flat.end(), z.g.begin(), z.g.end());
    }
    return torch::tensor(flat).view({static_cast<std::int64_t>(b), n});
}

torch::Tensor decode_eval(Networks& nets, const torch::Tensor& latent, const torch::Tensor& codes) {
    EvalMode m(*nets.dec);
    return nets.dec->forward(latent, codes);
}

torch::Tensor encode_eval(Networks& nets, const torch::Tensor& x) {
    EvalMode m(*nets.enc);
    return nets.enc->forward(x);
}

}  // namespace

torch::Tensor extract_features(Recognizer& rec, const torch::Tensor& images) {
    torch::NoGradGuard ng;
    EvalMode m(*rec);
    std::vector<torch::Tensor> parts;
    for (std::int64_t s = 0; s < images.size(0); s += kEvalBatch) {
        parts.push_back(rec->extract(images.slice(0, s, std::min(s + kEvalBatch, images.size(0)))));
    }
    return torch::cat(parts);
}

std::vector<int> predict(Recognizer& rec, const torch::Tensor& images) {
    torch::NoGradGuard ng;
    EvalMode m(*rec);
    std::vector<int> out;
    for (std::int64_t s = 0; s < images.size(0); s += kEvalBatch) {
        const auto logits = rec->forward(images.slice(0, s, std::min(s + kEvalBatch, images.size(0)))).logits;
        const auto arg = logits.argmax(1);
        for (std::int64_t i = 0; i < arg.size(0); ++i) {
            out.push_back(static_cast<int>(arg[i].item<std::int64_t>()));
        }
    }
    return out;
}

torch::Tensor peak_codes(const std::vector<int>& classes, int num_classes) {
    auto u = -torch::ones({static_cast<std::int64_t>(classes.size()), num_classes});
    for (std::size_t i = 0; i < classes.size(); ++i) {
        u[static_cast<std::int64_t>(i)][classes[i]] = 1.0f;
    }
    return u;
}

torch::Tensor synthesize_relabel(Networks& nets, const ExperimentConfig& cfg, const torch::Tensor& x) {
    torch::NoGradGuard ng;
    const int k = cfg.num_classes;
    std::vector<int> classes(static_cast<std::size_t>(k));
    std::iota(classes.begin(), classes.end(), 0);
    const auto g = encode_eval(nets, x).expand({k, cfg.latent_dim});
    return decode_eval(nets, g, peak_codes(classes, k));
}

std::vector<float> sweep_values(int steps) {
    std::vector<float> v;
    for (int i = 0; i < steps; ++i) {
        v.push_back(steps == 1 ? 1.0f : -1.0f + 2.0f * static_cast<float>(i) / static_cast<float>(steps - 1));
    }
    return v;
}

torch::Tensor synthesize_intensity_sweep(Networks& nets, const ExperimentConfig& cfg, const torch::Tensor& x,
                                         int steps) {
    torch::NoGradGuard ng;
    const int k = cfg.num_classes;
    const auto values = sweep_values(steps);
    auto codes = -torch::ones({static_cast<std::int64_t>(k) * steps, k});
    for (int c = 0; c < k; ++c) {
        for (int s = 0; s < steps; ++s) {
            codes[c * steps + s][c] = values[static_cast<std::size_t>(s)];
        }
    }
    const auto g = encode_eval(nets, x).expand({static_cast<std::int64_t>(k) * steps, cfg.latent_dim});
    return decode_eval(nets, g, codes);
}

torch::Tensor synthesize_prior(Networks& nets, const ExperimentConfig& cfg, int m, std::uint64_t seed) {
    torch::NoGradGuard ng;
    std::vector<int> classes;
    for (int i = 0; i < m; ++i) {
        classes.push_back(i % cfg.num_classes);
    }
    return decode_eval(nets, prior_batch(static_cast<std::size_t>(m), cfg.latent_dim, seed),
                       peak_codes(classes, cfg.num_classes));
}

std::vector<std::size_t> verification_anchors(const DatasetManifest& manifest,
                                              const std::vector<std::size_t>& entries) {
    std::map<std::string, std::size_t> first;
    for (auto i : entries) {
        first.emplace(manifest.entries[i].subject_id, i);
    }
    std::vector<std::size_t> out;
    for (const auto& [s, i] : first) {
        out.push_back(i);
    }
    return out;
}

std::vector<VerificationPair> build_verification_pairs(Networks& nets, const ExperimentConfig& cfg,
                                                       const TensorDataset& data,
                                                       const std::vector<std::size_t>& anchors, std::uint64_t seed) {
    if (!nets.embedder) {
        throw std::logic_error("verification needs an identity embedder");
    }
    if (anchors.empty()) {
        throw DataError("no anchor images for verification");
    }
    torch::NoGradGuard ng;
    const int k = cfg.num_classes;
    std::vector<int> classes(static_cast<std::size_t>(k));
    std::iota(classes.begin(), classes.end(), 0);
    const auto codes = peak_codes(classes, k);

    auto to_vec = [](const torch::Tensor& row) {
        const auto c = row.contiguous();
        return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    };

    std::vector<VerificationPair> pairs;
    const auto z_all = prior_batch(anchors.size(), cfg.latent_dim, seed);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        const auto x = data.images[static_cast<std::int64_t>(anchors[a])].unsqueeze(0);
        const auto f_x = to_vec(nets.embedder->embed(x)[0]);
        const auto same = decode_eval(nets, encode_eval(nets, x).expand({k, cfg.latent_dim}), codes);
        const auto other = decode_eval(nets, z_all[static_cast<std::int64_t>(a)].unsqueeze(0).expand({k, cfg.latent_dim}),
                                       codes);
        const auto f_same = nets.embedder->embed(same);
        const auto f_other = nets.embedder->embed(other);
        for (int c = 0; c < k; ++c) {
            pairs.push_back({f_x, to_vec(f_same[c]), true});
        }
        for (int c = 0; c < k; ++c) {
            pairs.push_back({f_x, to_vec(f_other[c]), false});
        }
    }
    return pairs;
}

EvalReport evaluate_fold(const ExperimentConfig& cfg, std::int64_t trained_iterations, Networks& nets,
                         const TensorDataset& data, const FoldSplit& split, int fold, const EvalOptions& options) {
    if (fold < 0 || fold >= split.fold_count) {
        throw std::out_of_range("fold index " + std::to_string(fold) + " outside [0, " +
                                std::to_string(split.fold_count) + ")");
    }
    const auto spec = variant_spec(cfg.variant).value();
    const auto& test = split.test[static_cast<std::size_t>(fold)];
    const auto& manifest = *data.manifest;

    EvalReport report;
    report.variant = cfg.variant;
    report.fold = fold;
    report.num_classes = cfg.num_classes;

    if (spec.train_recognizer) {
        if (trained_iterations <= recognizer_start(cfg)) {
            const auto msg = "recognizer untrained at t=" + std::to_string(trained_iterations);
            log_warn(msg);
            report.notes.push_back(msg);
        }
        const auto x = data.images.index_select(0, index_tensor(test));
        const auto pred = predict(nets.rec, x);
        std::vector<int> labels;
        for (auto i : test) {
            labels.push_back(manifest.entries[i].class_index);
        }
        fill_classification(report, pred, labels);
        report.fold_accuracies = {report.accuracy_mean};
    } else {
        report.notes.push_back("variant trains no recognizer; classification skipped");
    }

    if (!spec.train_generator) {
        const std::string msg = "variant trains no generator; synthesis metrics skipped";
        log_info(msg);
        report.notes.push_back(msg);
        return report;
    }

    // ground truth: last entry of each (subject, class) among the test entries
    std::map<std::pair<std::string, int>, std::size_t> truth;
    for (auto i : test) {
        truth[{manifest.entries[i].subject_id, manifest.entries[i].class_index}] = i;
    }
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    std::size_t n = 0;
    const auto inputs = std::min(options.max_synthesis_inputs, test.size());
    for (std::size_t j = 0; j < inputs; ++j) {
        const auto i = test[j * test.size() / inputs];
        const auto& e = manifest.entries[i];
        const auto outs = synthesize_relabel(nets, cfg, data.images[static_cast<std::int64_t>(i)].unsqueeze(0));
        for (int c = 0; c < cfg.num_classes; ++c) {
            auto it = truth.find({e.subject_id, c});
            if (c == e.class_index || it == truth.end()) {
                continue;
            }
            const auto fake = to_image(outs[c]);
            const auto real = to_image(data.images[static_cast<std::int64_t>(it->second)]);
            psnr_sum += psnr(fake, real);
            ssim_sum += ssim(fake, real);
            ++n;
        }
    }
    if (n > 0) {
        report.psnr_mean = psnr_sum / static_cast<double>(n);
        report.ssim_mean = ssim_sum / static_cast<double>(n);
    } else {
        const std::string msg = "no same-subject ground truth for relabelled faces; PSNR/SSIM skipped";
        log_info(msg);
        report.notes.push_back(msg);
    }

    if (nets.embedder) {
        const auto anchors = verification_anchors(manifest, test);
        report.verification = verification_rate(build_verification_pairs(nets, cfg, data, anchors, options.seed));
    } else {
        report.notes.push_back("no identity embedder; verification skipped");
    }
    return report;
}

double real_synthetic_distance(const ExperimentConfig& cfg, Networks& nets, const TensorDataset& data,
                               const std::vector<std::size_t>& entries, std::uint64_t seed) {
    torch::NoGradGuard ng;
    const auto x = data.images.index_select(0, index_tensor(entries));
    std::vector<int> classes;
    for (auto i : entries) {
        classes.push_back(data.manifest->entries[i].class_index);
    }
    const auto fake = decode_eval(nets, prior_batch(entries.size(), cfg.latent_dim, seed),
                                  peak_codes(classes, cfg.num_classes));
    const auto f_real = extract_features(nets.rec, x);
    const auto f_fake = extract_features(nets.rec, fake);
    return (f_real - f_fake).norm(2, 1).mean().item<double>();
}

void export_features(Recognizer& rec, const torch::Tensor& images, const std::vector<int>& labels,
                     const std::vector<int>& synthetic, const fs::path& path) {
    if (static_cast<std::int64_t>(labels.size()) != images.size(0) || labels.size() != synthetic.size()) {
        throw std::invalid_argument("export_features: row count mismatch");
    }
    const auto f = extract_features(rec, images).contiguous();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "label,synthetic";
    for (std::int64_t j = 0; j < f.size(1); ++j) {
        out << ",f" << j;
    }
    out << '\n';
    const float* p = f.data_ptr<float>();
    char buf[32];
    for (std::int64_t i = 0; i < f.size(0); ++i) {
        out << labels[static_cast<std::size_t>(i)] << ',' << synthetic[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < f.size(1); ++j) {
            const auto r = std::to_chars(buf, buf + sizeof buf, p[i * f.size(1) + j]);
            out << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
        }
        out << '\n';
    }
}

FeatureTable read_features(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    FeatureTable t;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col == 0) {
                t.labels.push_back(std::stoi(cell));
            } else if (col == 1) {
                t.synthetic.push_back(std::stoi(cell));
            } else {
                float v = 0.0f;
                std::from_chars(cell.data(), cell.data() + cell.size(), v);
                row.push_back(v);
            }
            ++col;
        }
        t.features.push_back(std::move(row));
    }
    return t;
}

}  // namespace fesr
