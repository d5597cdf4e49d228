#pragma once

#include "fesr/datamodel.hpp"
#include "fesr/labelcodes.hpp"
#include "fesr/variants.hpp"

#include <torch/torch.h>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fesr {

// Scalar objectives. Inputs are batched tensors; every reduction is a mean.

/// -mean(fake scores), any shape (patch maps are averaged).
torch::Tensor adv_g_img(const torch::Tensor& fake_scores);
/// -mean(real) + mean(fake)
torch::Tensor adv_d_img(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// Per-sample critic value [B] for images [B, ...].
using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

/// coeff * mean_b (||d critic(x~_b) / d x~_b|| - 1)^2 with x~ = e x + (1 - e) x_hat, e ~ U(0, 1)
/// per sample. The result keeps its graph so it can be differentiated w.r.t. critic parameters.
torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake, double coeff,
                               Rng& rng);

constexpr double kProbClamp = 1e-7;
/// -mean log p(g(x))
torch::Tensor adv_g_z(const torch::Tensor& probs_gx);
/// -mean log p(z) - mean log(1 - p(g(x)))
torch::Tensor adv_d_z(const torch::Tensor& probs_z, const torch::Tensor& probs_gx);

/// Mean cross-entropy of logits [B, K] against class indices [B].
torch::Tensor cls_ce(const torch::Tensor& logits, const torch::Tensor& labels);
double cls_ce(const std::vector<float>& logits, int class_index);

torch::Tensor recon_l1(const torch::Tensor& x, const torch::Tensor& x_rec);
torch::Tensor identity_l1(const torch::Tensor& f_x, const torch::Tensor& f_xrec);

enum class Stage { pretrain, joint, separate };
const char* stage_name(Stage s);

/// Term names in metrics-CSV order. cls_R_f_G is the synthetic-image recognition loss seen by G,
/// evaluated after R's update in the same iteration.
const std::vector<std::string>& term_names();
const std::vector<std::string>& total_names();

template <class T>
struct LossTotals {
    std::optional<T> L_G;
    std::optional<T> L_Dimg;
    std::optional<T> L_Dz;
    std::optional<T> L_R;
};

struct LossReport {
    std::int64_t t = 0;
    Stage stage = Stage::pretrain;
    std::map<std::string, double> terms;
    LossTotals<double> totals;

    [[nodiscard]] bool has(const std::string& term) const { return terms.count(term) != 0; }
    /// `t,stage,<terms...>,L_G,L_Dimg,L_Dz,L_R`; absent terms are empty cells.
    static std::string csv_header();
    [[nodiscard]] std::string csv_row() const;
};

namespace detail {
[[noreturn]] void missing_term(const std::string& total, const std::string& term);
inline double scale(double v, double s) { return v * s; }
inline torch::Tensor scale(const torch::Tensor& v, double s) { return v * s; }
}  // namespace detail

namespace detail {
template <class T>
struct Weighted {
    const std::map<std::string, T>& terms;
    const char* total;
    std::optional<T> acc;

    const T& get(const std::string& term) const {
        auto it = terms.find(term);
        if (it == terms.end()) {
            missing_term(total, term);
        }
        return it->second;
    }
    void add(const std::string& term, double w) {
        if (w == 0.0) {
            return;
        }
        T v = w == 1.0 ? get(term) : scale(get(term), w);
        acc = acc ? T(*acc + v) : v;
    }
    void add_value(T v) { acc = acc ? T(*acc + v) : v; }
};
}  // namespace detail

// Weighted objectives of the networks active in a stage and variant:
//   L_G    = adv_g_img + l1 adv_g_z + l2 rec + l3 id + l4 cls_D_f (+ l4 cls_R_f in the joint stage)
//   L_Dimg = l5 adv_d_img + cls_D_r + gp
//   L_Dz   = adv_d_z
//   L_R    = l6 intra + mean(cls_R_r, cls_R_f)
// A zero weight drops its term entirely; nullopt means the network does not train.
// Missing required terms throw std::invalid_argument.

template <class T>
std::optional<T> total_G(const std::map<std::string, T>& terms, const std::array<double, 6>& l, Stage stage,
                         const VariantSpec& spec) {
    if (!spec.train_generator || stage == Stage::separate) {
        return std::nullopt;
    }
    detail::Weighted<T> w{terms, "L_G", std::nullopt};
    if (spec.image_discriminator) w.add("adv_g_img", 1.0);
    if (spec.latent_discriminator) w.add("adv_g_z", l[0]);
    if (spec.content_losses) w.add("rec", l[1]);
    if (spec.identity_loss) w.add("id", l[2]);
    if (spec.image_classifier) w.add("cls_D_f", l[3]);
    if (stage == Stage::joint && spec.train_recognizer && spec.joint_feedback) {
        w.add(terms.count("cls_R_f_G") ? "cls_R_f_G" : "cls_R_f", l[3]);
    }
    return w.acc;
}

template <class T>
std::optional<T> total_Dimg(const std::map<std::string, T>& terms, const std::array<double, 6>& l, Stage stage,
                            const VariantSpec& spec) {
    if (!spec.train_generator || stage == Stage::separate || !spec.image_discriminator) {
        return std::nullopt;
    }
    detail::Weighted<T> w{terms, "L_Dimg", std::nullopt};
    w.add("adv_d_img", l[4]);
    if (spec.image_classifier) w.add("cls_D_r", 1.0);
    if (terms.count("gp")) w.add("gp", 1.0);
    return w.acc;
}

template <class T>
std::optional<T> total_Dz(const std::map<std::string, T>& terms, const std::array<double, 6>& /*l*/, Stage stage,
                          const VariantSpec& spec) {
    if (!spec.train_generator || stage == Stage::separate || !spec.latent_discriminator) {
        return std::nullopt;
    }
    detail::Weighted<T> w{terms, "L_Dz", std::nullopt};
    w.add("adv_d_z", 1.0);
    return w.acc;
}

template <class T>
std::optional<T> total_R(const std::map<std::string, T>& terms, const std::array<double, 6>& l, Stage stage,
                         const VariantSpec& spec) {
    if (stage == Stage::pretrain || !spec.train_recognizer) {
        return std::nullopt;
    }
    detail::Weighted<T> w{terms, "L_R", std::nullopt};
    if (spec.intra_loss) w.add("intra", l[5]);
    if (spec.train_generator) {
        w.add_value(detail::scale(T(w.get("cls_R_r") + w.get("cls_R_f")), 0.5));
    } else {
        w.add("cls_R_r", 1.0);
    }
    return w.acc;
}

template <class T>
LossTotals<T> aggregate(const std::map<std::string, T>& terms, const std::array<double, 6>& lambdas, Stage stage,
                        const VariantSpec& spec) {
    return {total_G(terms, lambdas, stage, spec), total_Dimg(terms, lambdas, stage, spec),
            total_Dz(terms, lambdas, stage, spec), total_R(terms, lambdas, stage, spec)};
}

/// Throws NumericError naming the first non-finite or exploding (|v| > 1e6) entry.
void check_finite(const std::map<std::string, double>& values, std::int64_t t);

}  // namespace fesr
