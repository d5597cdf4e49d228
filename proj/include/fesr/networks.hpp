#pragma once

// The five trainable networks of the synthesis/recognition model and the frozen
// identity embedder. Full-size layer shapes are for 128x128 inputs;
// smaller power-of-two inputs truncate the stride-2 stacks.

#include "fesr/datamodel.hpp"

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

namespace fesr {

struct LayerShape {
    std::string network;
    std::string layer;
    std::vector<std::int64_t> shape;  // output shape, batch dimension included
};

/// Layer widths and counts resolved for one config.
struct Architecture {
    std::vector<int> encoder_widths;      // kernel 4, stride 2, padding 1
    std::vector<int> decoder_widths;      // hidden transposed convs; the first one has padding 0
    std::vector<int> disc_trunk_widths;
    int disc_cls_width = 0;
    int disc_cls_kernel = 0;              // final classifier conv covers the remaining map
    std::vector<int> latent_disc_widths;  // 64, 32, 16, 1
    std::vector<int> recognizer_stem;     // empty when the frozen backbone is used
    int recognizer_conv1 = 0;
    int recognizer_conv2 = 0;
    int recognizer_hidden = 0;
    int feature_dim = 0;
    int recognizer_flat = 0;
};

Architecture make_architecture(const ExperimentConfig& cfg);

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const ExperimentConfig& cfg);
    torch::Tensor forward(const torch::Tensor& x);
    std::vector<LayerShape> trace(torch::Tensor x);

private:
    torch::nn::Sequential convs_{nullptr};
    torch::nn::Linear fc_{nullptr};
    int channels_;
    int size_;
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
public:
    explicit DecoderImpl(const ExperimentConfig& cfg);
    /// latent [B, n] and intensity code [B, K] -> image [B, c, H, W] in (-1, 1)
    torch::Tensor forward(const torch::Tensor& latent, const torch::Tensor& code);
    std::vector<LayerShape> trace(const torch::Tensor& latent, const torch::Tensor& code);

private:
    torch::nn::Sequential deconvs_{nullptr};
    int input_dim_;
};
TORCH_MODULE(Decoder);

struct DiscOutput {
    torch::Tensor adv;     // [B, 1, h, w] patch scores
    torch::Tensor logits;  // [B, K]; undefined when the classifier head is skipped
};

class ImageDiscriminatorImpl : public torch::nn::Module {
public:
    explicit ImageDiscriminatorImpl(const ExperimentConfig& cfg);
    DiscOutput forward(const torch::Tensor& x, bool with_classifier = true);
    torch::Tensor adversarial(const torch::Tensor& x);
    std::vector<LayerShape> trace(torch::Tensor x);

private:
    torch::nn::Sequential trunk_{nullptr};
    torch::nn::Conv2d adv_head_{nullptr};
    torch::nn::Sequential cls_head_{nullptr};
    int channels_;
    int size_;
};
TORCH_MODULE(ImageDiscriminator);

class LatentDiscriminatorImpl : public torch::nn::Module {
public:
    explicit LatentDiscriminatorImpl(const ExperimentConfig& cfg);
    /// [B, n] -> probabilities [B] in (0, 1)
    torch::Tensor forward(const torch::Tensor& v);
    std::vector<LayerShape> trace(torch::Tensor v);

private:
    torch::nn::Sequential layers_{nullptr};
    int input_dim_;
};
TORCH_MODULE(LatentDiscriminator);

/// Fixed convolutional front end standing in for the first blocks of a pretrained face
/// network. Parameters never receive gradients.
class FrozenBackboneImpl : public torch::nn::Module {
public:
    FrozenBackboneImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential& layers() { return layers_; }
    static constexpr int kOutChannels = 192;
    static constexpr int kDownsample = 8;

private:
    torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(FrozenBackbone);

struct RecognizerOutput {
    torch::Tensor features;  // [B, feature_dim], penultimate layer before dropout
    torch::Tensor logits;    // [B, K]
};

class RecognizerImpl : public torch::nn::Module {
public:
    explicit RecognizerImpl(const ExperimentConfig& cfg);
    RecognizerOutput forward(const torch::Tensor& x);
    torch::Tensor extract(const torch::Tensor& x);
    torch::Tensor classify(const torch::Tensor& features);
    std::vector<LayerShape> trace(torch::Tensor x);
    /// Trainable parameters only (the frozen backbone is excluded).
    std::vector<torch::Tensor> trainable_parameters() const;
    FrozenBackbone backbone() const { return backbone_; }

private:
    FrozenBackbone backbone_{nullptr};
    torch::nn::Sequential extractor_{nullptr};
    torch::nn::Dropout dropout_{nullptr};
    torch::nn::Linear classifier_{nullptr};
    int channels_;
    int size_;
};
TORCH_MODULE(Recognizer);

/// Frozen identity feature map. Gradients flow through to the input image, never into
/// the embedder's own parameters.
class IdentityEmbedder {
public:
    virtual ~IdentityEmbedder() = default;
    virtual torch::Tensor embed(const torch::Tensor& images) = 0;
    virtual std::int64_t dim() const = 0;
    virtual std::vector<torch::Tensor> parameters() const = 0;
};

class ToyEmbedderNetImpl : public torch::nn::Module {
public:
    ToyEmbedderNetImpl(const ExperimentConfig& cfg, int identity_classes);
    torch::Tensor embed(const torch::Tensor& x);
    torch::Tensor identity_logits(const torch::Tensor& embedding);
    std::vector<LayerShape> trace(torch::Tensor x);

private:
    torch::nn::Sequential body_{nullptr};
    torch::nn::Linear head_{nullptr};
    int identity_dim_;
};
TORCH_MODULE(ToyEmbedderNet);

/// Small conv net trained on subject classification, then frozen.
class ToyIdentityEmbedder final : public IdentityEmbedder {
public:
    ToyIdentityEmbedder(const ExperimentConfig& cfg, int identity_classes);

    /// Subject-classification pretraining on `images` ([N, c, H, W]) with subject labels [N].
    /// Deterministic for a fixed seed; freezes the network afterwards.
    void pretrain(const torch::Tensor& images, const torch::Tensor& subjects, int steps, std::uint64_t seed);
    void freeze();

    torch::Tensor embed(const torch::Tensor& images) override;
    std::int64_t dim() const override { return identity_dim_; }
    std::vector<torch::Tensor> parameters() const override { return net_->parameters(); }
    ToyEmbedderNet& net() { return net_; }
    int identity_classes() const { return identity_classes_; }

private:
    ToyEmbedderNet net_{nullptr};
    int identity_dim_;
    int identity_classes_;
};

/// Any TorchScript module mapping [B, c, H, W] images to [B, d] embeddings.
class ScriptedIdentityEmbedder final : public IdentityEmbedder {
public:
    explicit ScriptedIdentityEmbedder(const std::string& path);
    torch::Tensor embed(const torch::Tensor& images) override;
    std::int64_t dim() const override;
    std::vector<torch::Tensor> parameters() const override;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    mutable std::int64_t dim_ = -1;
};

/// Per-layer output shapes of every network for one forward pass of a single sample.
std::vector<LayerShape> shape_audit(const ExperimentConfig& cfg);
std::string format_shape_table(const std::vector<LayerShape>& shapes);

std::int64_t parameter_count(const torch::nn::Module& module);
/// Number of conv / transposed-conv / linear layers.
int weight_layer_count(const torch::nn::Module& module);

/// Converts images to a [B, c, H, W] float tensor and back.
torch::Tensor to_tensor(const std::vector<Image>& images);
torch::Tensor to_tensor(const Image& image);
Image to_image(const torch::Tensor& chw);

}  // namespace fesr
