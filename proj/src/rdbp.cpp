#include "fesr/rdbp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fesr {

namespace {

struct SafeNorm : torch::autograd::Function<SafeNorm> {
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& d) {
        auto n = d.norm(2, -1);
        ctx->save_for_backward({d, n});
        return n;
    }

    static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::tensor_list grad_out) {
        const auto saved = ctx->get_saved_variables();
        const auto& d = saved[0];
        const auto& n = saved[1];
        return {grad_out[0].unsqueeze(-1) * d / (n.unsqueeze(-1) + 1e-12)};
    }
};

void check_features(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
    if (a.sizes() != b.sizes()) {
        std::ostringstream os;
        os << who << ": feature shape mismatch " << a.sizes() << " vs " << b.sizes();
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

torch::Tensor safe_norm(const torch::Tensor& d) { return SafeNorm::apply(d); }

IntraClassTerms<torch::Tensor> intra_class_loss(const torch::Tensor& f_x, const torch::Tensor& f_xpr,
                                                const torch::Tensor& f_xpf, GradientRule rule) {
    check_features(f_x, f_xpr, "intra_class_loss");
    check_features(f_x, f_xpf, "intra_class_loss");
    const auto anchor = rule == GradientRule::rdbp ? f_x.detach() : f_x;
    IntraClassTerms<torch::Tensor> out;
    out.dist_r = safe_norm(f_x - f_xpr).mean();
    out.dist_rf = safe_norm(anchor - f_xpf).mean();
    out.total = out.dist_r + out.dist_rf;
    return out;
}

IntraClassTerms<double> intra_class_loss(std::span<const float> f_x, std::span<const float> f_xpr,
                                         std::span<const float> f_xpf) {
    if (f_x.size() != f_xpr.size() || f_x.size() != f_xpf.size()) {
        throw std::invalid_argument("intra_class_loss: feature length mismatch");
    }
    double r = 0.0;
    double rf = 0.0;
    for (std::size_t i = 0; i < f_x.size(); ++i) {
        r += (double(f_x[i]) - f_xpr[i]) * (double(f_x[i]) - f_xpr[i]);
        rf += (double(f_x[i]) - f_xpf[i]) * (double(f_x[i]) - f_xpf[i]);
    }
    IntraClassTerms<double> out{std::sqrt(r), std::sqrt(rf), 0.0};
    out.total = out.dist_r + out.dist_rf;
    return out;
}

std::vector<torch::Tensor> rdbp_backward(const IntraClassTerms<torch::Tensor>& terms,
                                         const std::vector<torch::Tensor>& params) {
    if (!terms.total.defined() || !terms.total.requires_grad()) {
        throw std::logic_error("rdbp_backward: the intra-class loss carries no autograd graph");
    }
    auto grads = torch::autograd::grad({terms.total}, params, {}, /*retain_graph=*/true, /*create_graph=*/false,
                                       /*allow_unused=*/true);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].defined()) {
            grads[i] = torch::zeros_like(params[i]);
        }
    }
    return grads;
}

std::array<double, 3> branch_gradient_norms(const torch::Tensor& f_x, const torch::Tensor& f_xpr,
                                            const torch::Tensor& f_xpf, GradientRule rule) {
    std::vector<torch::Tensor> leaves{f_x.detach().clone().requires_grad_(true),
                                      f_xpr.detach().clone().requires_grad_(true),
                                      f_xpf.detach().clone().requires_grad_(true)};
    const auto terms = intra_class_loss(leaves[0], leaves[1], leaves[2], rule);
    const auto grads = rdbp_backward(terms, leaves);
    return {grads[0].norm().item<double>(), grads[1].norm().item<double>(), grads[2].norm().item<double>()};
}

}  // namespace fesr
