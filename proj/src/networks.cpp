#include "fesr/networks.hpp"

#include "fesr/labelcodes.hpp"

#include <torch/script.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace fesr {

namespace nn = torch::nn;

namespace {

int log2_size(int size) { return std::countr_zero(static_cast<unsigned>(size)); }

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::ConvTranspose2d deconv(int in, int out, int kernel, int stride, int padding) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

nn::InstanceNorm2d instance_norm(int channels) {
    return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true));
}

std::string layer_name(const std::shared_ptr<nn::Module>& m) {
    std::ostringstream os;
    m->pretty_print(os);
    auto s = os.str();
    if (s.starts_with("torch::nn::")) {
        s = s.substr(11);
    }
    return s;
}

void trace_sequential(const std::string& network, nn::Sequential& seq, torch::Tensor& x,
                      std::vector<LayerShape>& out) {
    for (auto& layer : *seq) {
        x = layer.forward(x);
        out.push_back({network, layer_name(layer.ptr()), x.sizes().vec()});
    }
}

void check_image_shape(const torch::Tensor& x, int channels, int size, const char* who) {
    if (x.dim() != 4 || x.size(1) != channels || x.size(2) != size || x.size(3) != size) {
        std::ostringstream os;
        os << who << ": expected input [B, " << channels << ", " << size << ", " << size << "], got " << x.sizes();
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

Architecture make_architecture(const ExperimentConfig& cfg) {
    Architecture a;
    const int k = log2_size(cfg.image_size);
    auto width = [&](int i) { return std::min(cfg.base_width << i, cfg.max_width); };

    for (int i = 0; i < k - 2; ++i) {
        a.encoder_widths.push_back(width(i));
    }
    // k - 1 transposed convs: 1x1 -> 4x4, then doubling up to the image size.
    const int deconvs = k - 1;
    for (int j = 0; j < deconvs - 1; ++j) {
        const int w = std::min((cfg.base_width << (deconvs - 2 - j)) / 2, cfg.max_width);
        a.decoder_widths.push_back(std::max(w, 8));
    }
    const int trunk = std::min(4, k - 2);
    for (int i = 0; i < trunk; ++i) {
        a.disc_trunk_widths.push_back(width(i));
    }
    a.disc_cls_width = width(trunk);
    a.disc_cls_kernel = cfg.image_size >> (trunk + 1);
    a.latent_disc_widths = {64, 32, 16, 1};

    int spatial = cfg.image_size;
    if (!cfg.frozen_backbone) {
        a.recognizer_stem = {std::max(cfg.recognizer_width / 4, 8), std::max(cfg.recognizer_width / 2, 8)};
        spatial /= 4;
    } else {
        spatial /= FrozenBackboneImpl::kDownsample;
    }
    a.recognizer_conv1 = cfg.recognizer_width;
    a.recognizer_conv2 = cfg.recognizer_width * 2;
    spatial = (spatial + 1) / 2;
    spatial = (spatial + 1) / 2;
    a.recognizer_flat = a.recognizer_conv2 * spatial * spatial;
    a.recognizer_hidden = cfg.recognizer_hidden;
    a.feature_dim = cfg.feature_dim;
    return a;
}

// ---------------------------------------------------------------- encoder

EncoderImpl::EncoderImpl(const ExperimentConfig& cfg) : channels_(cfg.channels), size_(cfg.image_size) {
    const auto arch = make_architecture(cfg);
    convs_ = nn::Sequential();
    int in = cfg.channels;
    for (int w : arch.encoder_widths) {
        convs_->push_back(conv(in, w, 4, 2, 1));
        convs_->push_back(instance_norm(w));
        convs_->push_back(lrelu());
        in = w;
    }
    convs_->push_back(nn::Flatten());
    register_module("convs", convs_);
    fc_ = register_module("fc", nn::Linear(in * 4 * 4, cfg.latent_dim));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
    check_image_shape(x, channels_, size_, "encode");
    return torch::tanh(fc_->forward(convs_->forward(x)));
}

std::vector<LayerShape> EncoderImpl::trace(torch::Tensor x) {
    std::vector<LayerShape> out;
    trace_sequential("G_enc", convs_, x, out);
    x = fc_->forward(x);
    out.push_back({"G_enc", layer_name(fc_.ptr()), x.sizes().vec()});
    x = torch::tanh(x);
    out.push_back({"G_enc", "Tanh", x.sizes().vec()});
    return out;
}

// ---------------------------------------------------------------- decoder

DecoderImpl::DecoderImpl(const ExperimentConfig& cfg) : input_dim_(cfg.latent_dim + cfg.num_classes) {
    const auto arch = make_architecture(cfg);
    deconvs_ = nn::Sequential();
    int in = input_dim_;
    bool first = true;
    for (int w : arch.decoder_widths) {
        deconvs_->push_back(deconv(in, w, 4, 2, first ? 0 : 1));
        deconvs_->push_back(instance_norm(w));
        deconvs_->push_back(nn::ReLU());
        in = w;
        first = false;
    }
    deconvs_->push_back(deconv(in, cfg.channels, 4, 2, 1));
    deconvs_->push_back(nn::Tanh());
    register_module("deconvs", deconvs_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent, const torch::Tensor& code) {
    if (latent.dim() != 2 || code.dim() != 2 || latent.size(0) != code.size(0) ||
        latent.size(1) + code.size(1) != input_dim_) {
        std::ostringstream os;
        os << "decode: latent " << latent.sizes() << " and code " << code.sizes() << " do not concatenate to "
           << input_dim_ << " features";
        throw std::invalid_argument(os.str());
    }
    auto h = torch::cat({latent, code}, 1);
    return deconvs_->forward(h.view({h.size(0), input_dim_, 1, 1}));
}

std::vector<LayerShape> DecoderImpl::trace(const torch::Tensor& latent, const torch::Tensor& code) {
    std::vector<LayerShape> out;
    auto x = torch::cat({latent, code}, 1);
    x = x.view({x.size(0), input_dim_, 1, 1});
    out.push_back({"G_dec", "concat[g, u]", x.sizes().vec()});
    trace_sequential("G_dec", deconvs_, x, out);
    return out;
}

// ---------------------------------------------------------------- image discriminator

ImageDiscriminatorImpl::ImageDiscriminatorImpl(const ExperimentConfig& cfg)
    : channels_(cfg.channels), size_(cfg.image_size) {
    const auto arch = make_architecture(cfg);
    trunk_ = nn::Sequential();
    int in = cfg.channels;
    for (int w : arch.disc_trunk_widths) {
        trunk_->push_back(conv(in, w, 4, 2, 1));
        trunk_->push_back(lrelu());
        in = w;
    }
    register_module("trunk", trunk_);
    adv_head_ = register_module("adv_head", conv(in, 1, 4, 2, 1));
    cls_head_ = nn::Sequential(conv(in, arch.disc_cls_width, 4, 2, 1), lrelu(),
                               conv(arch.disc_cls_width, cfg.num_classes, arch.disc_cls_kernel, 1, 0), nn::Flatten());
    register_module("cls_head", cls_head_);
}

DiscOutput ImageDiscriminatorImpl::forward(const torch::Tensor& x, bool with_classifier) {
    check_image_shape(x, channels_, size_, "disc_image");
    auto h = trunk_->forward(x);
    DiscOutput out;
    out.adv = adv_head_->forward(h);
    if (with_classifier) {
        out.logits = cls_head_->forward(h);
    }
    return out;
}

torch::Tensor ImageDiscriminatorImpl::adversarial(const torch::Tensor& x) { return forward(x, false).adv; }

std::vector<LayerShape> ImageDiscriminatorImpl::trace(torch::Tensor x) {
    std::vector<LayerShape> out;
    trace_sequential("D_img", trunk_, x, out);
    auto adv = adv_head_->forward(x);
    out.push_back({"D_img/adv", layer_name(adv_head_.ptr()), adv.sizes().vec()});
    trace_sequential("D_img/cls", cls_head_, x, out);
    return out;
}

// ---------------------------------------------------------------- latent discriminator

LatentDiscriminatorImpl::LatentDiscriminatorImpl(const ExperimentConfig& cfg) : input_dim_(cfg.latent_dim) {
    layers_ = nn::Sequential();
    int in = cfg.latent_dim;
    for (int w : make_architecture(cfg).latent_disc_widths) {
        layers_->push_back(nn::Linear(in, w));
        if (w != 1) {
            layers_->push_back(lrelu());
        }
        in = w;
    }
    layers_->push_back(nn::Sigmoid());
    register_module("layers", layers_);
}

torch::Tensor LatentDiscriminatorImpl::forward(const torch::Tensor& v) {
    if (v.dim() != 2 || v.size(1) != input_dim_) {
        std::ostringstream os;
        os << "disc_latent: expected [B, " << input_dim_ << "], got " << v.sizes();
        throw std::invalid_argument(os.str());
    }
    return layers_->forward(v).squeeze(1);
}

std::vector<LayerShape> LatentDiscriminatorImpl::trace(torch::Tensor v) {
    std::vector<LayerShape> out;
    trace_sequential("D_z", layers_, v, out);
    return out;
}

// ---------------------------------------------------------------- recognizer

FrozenBackboneImpl::FrozenBackboneImpl(int channels) {
    layers_ = nn::Sequential(conv(channels, 48, 5, 1, 2), nn::ReLU(), nn::MaxPool2d(2),  //
                             conv(48, 96, 3, 1, 1), nn::ReLU(), nn::MaxPool2d(2),        //
                             conv(96, kOutChannels, 3, 1, 1), nn::ReLU(), nn::MaxPool2d(2));
    register_module("layers", layers_);
    for (auto& p : parameters()) {
        p.set_requires_grad(false);
    }
}

torch::Tensor FrozenBackboneImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

RecognizerImpl::RecognizerImpl(const ExperimentConfig& cfg) : channels_(cfg.channels), size_(cfg.image_size) {
    const auto arch = make_architecture(cfg);
    extractor_ = nn::Sequential();
    int in = cfg.channels;
    if (cfg.frozen_backbone) {
        backbone_ = register_module("backbone", FrozenBackbone(cfg.channels));
        in = FrozenBackboneImpl::kOutChannels;
    } else {
        for (int w : arch.recognizer_stem) {
            extractor_->push_back(conv(in, w, 3, 2, 1));
            extractor_->push_back(nn::ReLU());
            in = w;
        }
    }
    extractor_->push_back(conv(in, arch.recognizer_conv1, 3, 2, 1));
    extractor_->push_back(nn::ReLU());
    extractor_->push_back(conv(arch.recognizer_conv1, arch.recognizer_conv2, 3, 2, 1));
    extractor_->push_back(nn::ReLU());
    extractor_->push_back(nn::Flatten());
    extractor_->push_back(nn::Linear(arch.recognizer_flat, arch.recognizer_hidden));
    extractor_->push_back(nn::ReLU());
    extractor_->push_back(nn::Linear(arch.recognizer_hidden, arch.feature_dim));
    extractor_->push_back(nn::ReLU());
    register_module("extractor", extractor_);
    dropout_ = register_module("dropout", nn::Dropout(cfg.dropout));
    classifier_ = register_module("classifier", nn::Linear(arch.feature_dim, cfg.num_classes));
}

torch::Tensor RecognizerImpl::extract(const torch::Tensor& x) {
    check_image_shape(x, channels_, size_, "recognize");
    auto h = x;
    if (backbone_) {
        h = backbone_->forward(h);
    }
    return extractor_->forward(h);
}

torch::Tensor RecognizerImpl::classify(const torch::Tensor& features) {
    return classifier_->forward(dropout_->forward(features));
}

RecognizerOutput RecognizerImpl::forward(const torch::Tensor& x) {
    auto f = extract(x);
    return {f, classify(f)};
}

std::vector<LayerShape> RecognizerImpl::trace(torch::Tensor x) {
    std::vector<LayerShape> out;
    if (backbone_) {
        trace_sequential("R_ext/frozen", backbone_->layers(), x, out);
    }
    trace_sequential("R_ext", extractor_, x, out);
    x = classifier_->forward(dropout_->forward(x));
    out.push_back({"R_cls", layer_name(classifier_.ptr()), x.sizes().vec()});
    return out;
}

std::vector<torch::Tensor> RecognizerImpl::trainable_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : parameters()) {
        if (p.requires_grad()) {
            out.push_back(p);
        }
    }
    return out;
}

// ---------------------------------------------------------------- identity embedders

ToyEmbedderNetImpl::ToyEmbedderNetImpl(const ExperimentConfig& cfg, int identity_classes)
    : identity_dim_(cfg.identity_dim) {
    body_ = nn::Sequential();
    int in = cfg.channels;
    int spatial = cfg.image_size;
    for (int w : {16, 32, 64}) {
        body_->push_back(conv(in, w, 4, 2, 1));
        body_->push_back(lrelu());
        in = w;
        spatial /= 2;
    }
    body_->push_back(nn::Flatten());
    body_->push_back(nn::Linear(in * spatial * spatial, cfg.identity_dim));
    register_module("body", body_);
    head_ = register_module("head", nn::Linear(cfg.identity_dim, std::max(identity_classes, 1)));
}

// unit-variance scale: rows have norm sqrt(d)
torch::Tensor ToyEmbedderNetImpl::embed(const torch::Tensor& x) {
    const auto e = body_->forward(x);
    return e / (e.norm(2, 1, true) + 1e-8) * std::sqrt(static_cast<double>(identity_dim_));
}

torch::Tensor ToyEmbedderNetImpl::identity_logits(const torch::Tensor& embedding) {
    return head_->forward(torch::relu(embedding));
}

std::vector<LayerShape> ToyEmbedderNetImpl::trace(torch::Tensor x) {
    std::vector<LayerShape> out;
    trace_sequential("F_id", body_, x, out);
    return out;
}

ToyIdentityEmbedder::ToyIdentityEmbedder(const ExperimentConfig& cfg, int identity_classes)
    : net_(cfg, identity_classes), identity_dim_(cfg.identity_dim), identity_classes_(identity_classes) {}

void ToyIdentityEmbedder::pretrain(const torch::Tensor& images, const torch::Tensor& subjects, int steps,
                                   std::uint64_t seed) {
    for (auto& p : net_->parameters()) {
        p.set_requires_grad(true);
    }
    net_->train();
    torch::optim::Adam opt(net_->parameters(), torch::optim::AdamOptions(1e-3));
    auto rng = make_rng(seed, 0x1de0);
    const auto n = images.size(0);
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    constexpr int batch = 32;
    for (int step = 0; step < steps; ++step) {
        std::vector<std::int64_t> idx(batch);
        for (auto& i : idx) {
            i = pick(rng);
        }
        const auto index = torch::tensor(idx, torch::kLong);
        const auto logits = net_->identity_logits(net_->embed(images.index_select(0, index)));
        const auto loss = torch::nn::functional::cross_entropy(logits, subjects.index_select(0, index));
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    freeze();
}

void ToyIdentityEmbedder::freeze() {
    net_->eval();
    for (auto& p : net_->parameters()) {
        p.set_requires_grad(false);
        p.mutable_grad() = torch::Tensor();
    }
}

torch::Tensor ToyIdentityEmbedder::embed(const torch::Tensor& images) { return net_->embed(images); }

struct ScriptedIdentityEmbedder::Impl {
    torch::jit::script::Module module;
};

ScriptedIdentityEmbedder::ScriptedIdentityEmbedder(const std::string& path) : impl_(std::make_shared<Impl>()) {
    try {
        impl_->module = torch::jit::load(path);
    } catch (const c10::Error& e) {
        throw DataError("cannot load identity embedder '" + path + "': " + e.what_without_backtrace());
    }
    impl_->module.eval();
    for (auto p : impl_->module.parameters()) {
        p.set_requires_grad(false);
    }
}

torch::Tensor ScriptedIdentityEmbedder::embed(const torch::Tensor& images) {
    auto out = impl_->module.forward({images}).toTensor();
    if (dim_ < 0) {
        dim_ = out.size(1);
    } else if (out.size(1) != dim_) {
        throw std::runtime_error("identity embedder changed its output dimension");
    }
    return out;
}

std::int64_t ScriptedIdentityEmbedder::dim() const { return dim_; }

std::vector<torch::Tensor> ScriptedIdentityEmbedder::parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : impl_->module.parameters()) {
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------- diagnostics

std::vector<LayerShape> shape_audit(const ExperimentConfig& cfg) {
    torch::NoGradGuard no_grad;
    Encoder enc(cfg);
    Decoder dec(cfg);
    ImageDiscriminator dimg(cfg);
    LatentDiscriminator dz(cfg);
    Recognizer rec(cfg);
    ToyEmbedderNet emb(cfg, 2);
    enc->eval();
    dec->eval();
    rec->eval();

    const auto x = torch::zeros({1, cfg.channels, cfg.image_size, cfg.image_size});
    std::vector<LayerShape> out;
    out.push_back({"input", "image", x.sizes().vec()});
    auto add = [&](std::vector<LayerShape> part) { out.insert(out.end(), part.begin(), part.end()); };
    add(enc->trace(x));
    add(dec->trace(torch::zeros({1, cfg.latent_dim}), torch::zeros({1, cfg.num_classes})));
    add(dimg->trace(x));
    add(dz->trace(torch::zeros({1, cfg.latent_dim})));
    add(rec->trace(x));
    add(emb->trace(x));
    return out;
}

std::string format_shape_table(const std::vector<LayerShape>& shapes) {
    std::ostringstream os;
    for (const auto& s : shapes) {
        os << std::left << std::setw(14) << s.network << std::setw(78) << s.layer << " [";
        for (std::size_t i = 0; i < s.shape.size(); ++i) {
            os << (i ? ", " : "") << s.shape[i];
        }
        os << "]\n";
    }
    return os.str();
}

std::int64_t parameter_count(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters()) {
        n += p.numel();
    }
    return n;
}

int weight_layer_count(const torch::nn::Module& module) {
    int n = 0;
    for (const auto& m : module.modules(/*include_self=*/true)) {
        if (m->as<nn::Conv2d>() || m->as<nn::ConvTranspose2d>() || m->as<nn::Linear>()) {
            ++n;
        }
    }
    return n;
}

torch::Tensor to_tensor(const Image& image) {
    return torch::from_blob(const_cast<float*>(image.pixels.data()), {image.channels, image.height, image.width},
                            torch::kFloat32)
        .clone();
}

torch::Tensor to_tensor(const std::vector<Image>& images) {
    if (images.empty()) {
        throw std::invalid_argument("to_tensor: empty image list");
    }
    const auto& f = images.front();
    auto out = torch::empty({static_cast<std::int64_t>(images.size()), f.channels, f.height, f.width});
    auto* dst = out.data_ptr<float>();
    for (const auto& img : images) {
        if (!img.same_shape(f)) {
            throw std::invalid_argument("to_tensor: images differ in shape");
        }
        dst = std::copy(img.pixels.begin(), img.pixels.end(), dst);
    }
    return out;
}

Image to_image(const torch::Tensor& chw) {
    const auto t = chw.detach().to(torch::kFloat32).contiguous();
    if (t.dim() != 3) {
        throw std::invalid_argument("to_image: expected [c, H, W]");
    }
    Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
    std::copy(t.data_ptr<float>(), t.data_ptr<float>() + t.numel(), img.pixels.begin());
    return img;
}

}  // namespace fesr
