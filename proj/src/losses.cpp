#include "fesr/losses.hpp"

#include <cmath>
#include <sstream>

namespace fesr {

namespace {

void require_nonempty(const torch::Tensor& t, const char* who) {
    if (!t.defined() || t.numel() == 0) {
        throw std::invalid_argument(std::string(who) + ": empty input");
    }
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
    if (a.sizes() != b.sizes()) {
        std::ostringstream os;
        os << who << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
        throw std::invalid_argument(os.str());
    }
}

torch::Tensor clamped_log(const torch::Tensor& p, const char* who) {
    static int warned = 0;
    {
        torch::NoGradGuard ng;
        if (warned < 5 && ((p <= kProbClamp) | (p >= 1.0 - kProbClamp)).any().item<bool>()) {
            ++warned;
            log_warn(std::string(who) + ": probability clamped to [1e-7, 1 - 1e-7]");
        }
    }
    return torch::log(p.clamp(kProbClamp, 1.0 - kProbClamp));
}

}  // namespace

torch::Tensor adv_g_img(const torch::Tensor& fake_scores) {
    require_nonempty(fake_scores, "adv_g_img");
    return -fake_scores.mean();
}

torch::Tensor adv_d_img(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
    require_nonempty(real_scores, "adv_d_img");
    require_nonempty(fake_scores, "adv_d_img");
    return fake_scores.mean() - real_scores.mean();
}

torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double coeff, Rng& rng) {
    require_same_shape(real, fake, "gradient_penalty");
    require_nonempty(real, "gradient_penalty");
    const auto b = real.size(0);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::vector<float> eps(static_cast<std::size_t>(b));
    for (auto& e : eps) {
        e = unit(rng);
    }
    std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
    shape[0] = b;
    const auto e = torch::tensor(eps).to(real.dtype()).view(shape);
    auto mixed = (e * real.detach() + (1 - e) * fake.detach()).requires_grad_(true);
    const auto scores = critic(mixed);
    const auto grad = torch::autograd::grad({scores.sum()}, {mixed}, {}, /*retain_graph=*/true,
                                            /*create_graph=*/true)[0];
    const auto norms = grad.reshape({b, -1}).norm(2, 1);
    return coeff * (norms - 1).pow(2).mean();
}

torch::Tensor adv_g_z(const torch::Tensor& probs_gx) {
    require_nonempty(probs_gx, "adv_g_z");
    return -clamped_log(probs_gx, "adv_g_z").mean();
}

torch::Tensor adv_d_z(const torch::Tensor& probs_z, const torch::Tensor& probs_gx) {
    require_nonempty(probs_z, "adv_d_z");
    require_nonempty(probs_gx, "adv_d_z");
    return -clamped_log(probs_z, "adv_d_z").mean() - clamped_log(1 - probs_gx, "adv_d_z").mean();
}

torch::Tensor cls_ce(const torch::Tensor& logits, const torch::Tensor& labels) {
    require_nonempty(logits, "cls_ce");
    if (!torch::isfinite(logits.detach()).all().item<bool>()) {
        throw NumericError("cls_ce: non-finite logits");
    }
    return torch::nn::functional::cross_entropy(logits, labels);
}

double cls_ce(const std::vector<float>& logits, int class_index) {
    if (class_index < 0 || class_index >= static_cast<int>(logits.size())) {
        throw std::out_of_range("cls_ce: class index out of range");
    }
    const auto l = torch::tensor(logits, torch::kFloat64).unsqueeze(0);
    return cls_ce(l, torch::tensor({static_cast<std::int64_t>(class_index)})).item<double>();
}

torch::Tensor recon_l1(const torch::Tensor& x, const torch::Tensor& x_rec) {
    require_same_shape(x, x_rec, "recon_l1");
    require_nonempty(x, "recon_l1");
    return (x - x_rec).abs().mean();
}

torch::Tensor identity_l1(const torch::Tensor& f_x, const torch::Tensor& f_xrec) {
    require_same_shape(f_x, f_xrec, "identity_l1");
    require_nonempty(f_x, "identity_l1");
    return (f_x - f_xrec).abs().mean();
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::pretrain: return "pretrain";
        case Stage::joint: return "joint";
        case Stage::separate: return "separate";
    }
    return "?";
}

const std::vector<std::string>& term_names() {
    static const std::vector<std::string> names{"adv_g_img", "adv_d_img", "gp",      "adv_g_z", "adv_d_z",
                                                "cls_D_f",   "cls_D_r",   "rec",     "id",      "cls_R_r",
                                                "cls_R_f",   "cls_R_f_G", "intra"};
    return names;
}

const std::vector<std::string>& total_names() {
    static const std::vector<std::string> names{"L_G", "L_Dimg", "L_Dz", "L_R"};
    return names;
}

std::string LossReport::csv_header() {
    std::string h = "t,stage";
    for (const auto& n : term_names()) {
        h += "," + n;
    }
    for (const auto& n : total_names()) {
        h += "," + n;
    }
    return h;
}

namespace {
void put(std::ostringstream& os, const std::optional<double>& v) {
    os << ',';
    if (v) {
        os << *v;
    }
}
}  // namespace

std::string LossReport::csv_row() const {
    std::ostringstream os;
    os.precision(9);
    os << t << ',' << stage_name(stage);
    for (const auto& n : term_names()) {
        auto it = terms.find(n);
        put(os, it == terms.end() ? std::nullopt : std::optional<double>(it->second));
    }
    put(os, totals.L_G);
    put(os, totals.L_Dimg);
    put(os, totals.L_Dz);
    put(os, totals.L_R);
    return os.str();
}

namespace detail {
void missing_term(const std::string& total, const std::string& term) {
    throw std::invalid_argument(total + " requires term '" + term + "' in this stage");
}
}  // namespace detail

void check_finite(const std::map<std::string, double>& values, std::int64_t t) {
    for (const auto& [name, v] : values) {
        if (!std::isfinite(v) || std::abs(v) > 1e6) {
            std::ostringstream os;
            os << "loss term '" << name << "' diverged at t=" << t << " (value " << v << ")";
            throw NumericError(os.str());
        }
    }
}

}  // namespace fesr
