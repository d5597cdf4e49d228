#pragma once

#include "fesr/datasets.hpp"
#include "fesr/losses.hpp"
#include "fesr/networks.hpp"
#include "fesr/rdbp.hpp"
#include "fesr/variants.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fesr {

/// Every trainable network plus the frozen identity embedder.
struct Networks {
    Encoder enc{nullptr};
    Decoder dec{nullptr};
    ImageDiscriminator dimg{nullptr};
    LatentDiscriminator dz{nullptr};
    Recognizer rec{nullptr};
    std::shared_ptr<IdentityEmbedder> embedder;

    /// Weights are initialized from a generator seeded with cfg.seed.
    explicit Networks(const ExperimentConfig& cfg);

    std::vector<torch::Tensor> generator_parameters() const;
    void train(bool on);
};

struct OptimizerSet {
    std::unique_ptr<torch::optim::Adam> g;
    std::unique_ptr<torch::optim::Adam> dimg;
    std::unique_ptr<torch::optim::Adam> dz;
    std::unique_ptr<torch::optim::Adam> r;
};

torch::optim::AdamOptions adam_options(const ExperimentConfig& cfg);
OptimizerSet make_optimizers(const ExperimentConfig& cfg, Networks& nets);

/// All images of a manifest as one [N, c, H, W] tensor plus labels and subjects.
struct TensorDataset {
    const DatasetManifest* manifest = nullptr;
    torch::Tensor images;
    torch::Tensor labels;  // int64 [N]

    TensorDataset() = default;
    TensorDataset(const DatasetManifest& m, const std::vector<Image>& imgs);
};

/// Iteration count of a run: P_max, or 2 P_max - P_pre for the sequential variant
/// (a full FESGAN run followed by a recognizer-only phase as long as the joint stage).
std::int64_t total_iterations(const ExperimentConfig& cfg);
/// First iteration at which the recognizer trains.
std::int64_t recognizer_start(const ExperimentConfig& cfg);
Stage stage_at(const ExperimentConfig& cfg, std::int64_t t);

/// Two-stage trainer over one fold's training entries.
class Trainer {
public:
    Trainer(const ExperimentConfig& cfg, const TensorDataset& data, std::vector<std::size_t> train_entries);

    /// Builds the identity embedder: the toy net pretrained on the training subjects, unless
    /// `external` is given. Called by the constructor when the variant needs identity features.
    void set_embedder(std::shared_ptr<IdentityEmbedder> external);

    /// One iteration at the current t (D_z, D_img, [R], G), then t += 1.
    LossReport step();

    [[nodiscard]] std::int64_t t() const noexcept { return t_; }
    [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const VariantSpec& spec() const noexcept { return spec_; }
    Networks& networks() noexcept { return nets_; }
    OptimizerSet& optimizers() noexcept { return opts_; }

    void save_checkpoint(const std::filesystem::path& path) const;
    /// Restores everything saved by save_checkpoint. Throws ConfigError when the stored config
    /// hash differs from this trainer's.
    void load_checkpoint(const std::filesystem::path& path);

    /// When on, every sub-update verifies that only its own network's parameters changed.
    void set_isolation_check(bool on) { isolation_check_ = on; }
    [[nodiscard]] const std::vector<std::string>& isolation_violations() const { return violations_; }

private:
    struct Codes;
    Codes draw_codes(const Batch& batch, Rng& rng) const;
    torch::Tensor synthesize_pf(const torch::Tensor& g, const torch::Tensor& labels, Rng& rng);
    void apply(torch::optim::Adam& opt, const torch::Tensor& loss, const std::vector<torch::Tensor>& params);
    void guarded(const std::string& name, const std::function<void()>& update);

    ExperimentConfig cfg_;
    VariantSpec spec_;
    const TensorDataset* data_;
    std::vector<std::size_t> train_entries_;
    BatchSchedule schedule_;
    Networks nets_;
    OptimizerSet opts_;
    std::int64_t t_ = 0;
    bool isolation_check_ = false;
    std::vector<std::string> violations_;
};

/// Networks and config restored from a checkpoint without training data.
struct LoadedModel {
    ExperimentConfig cfg;
    std::int64_t t = 0;
    std::unique_ptr<Networks> nets;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t t);
/// Highest-t checkpoint in dir, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

struct RunOptions {
    std::filesystem::path out_dir;
    bool resume = true;
    /// Stop before this iteration (simulated interruption); the run stays resumable.
    std::optional<std::int64_t> stop_at;
    bool isolation_check = false;
    std::function<void(const Trainer&, std::int64_t t)> on_checkpoint;
    std::function<void(const LossReport&)> on_step;
};

struct RunResult {
    std::int64_t iterations = 0;
    std::filesystem::path final_checkpoint;
    std::filesystem::path metrics_csv;
};

/// Trains to completion (or stop_at), writing `metrics.csv`, `config.cfg` and
/// `ckpt_<t>.pt` at the checkpoint cadence and at the end.
RunResult run(const ExperimentConfig& cfg, const TensorDataset& data, const std::vector<std::size_t>& train_entries,
              const RunOptions& options, std::unique_ptr<Trainer>* keep = nullptr);

}  // namespace fesr
