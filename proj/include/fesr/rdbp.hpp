#pragma once

// Intra-class loss on recognizer features and the real-data-guided gradient rule: the
// real/synthetic distance only back-propagates through the synthetic branch.

#include <torch/torch.h>

#include <array>
#include <span>
#include <vector>

namespace fesr {

enum class GradientRule {
    rdbp,  // real anchor feature is a constant in the real/synthetic term
    full,  // ordinary back-propagation through every branch
};

/// Row-wise Euclidean norm of [B, d] (or [d]) with backward grad * d / (||d|| + 1e-12), so
/// coincident features get the zero subgradient.
torch::Tensor safe_norm(const torch::Tensor& d);

template <class T>
struct IntraClassTerms {
    T dist_r;
    T dist_rf;
    T total;
};

/// Batch means of ||f_x - f_xpr|| and ||f_x - f_xpf||. Under GradientRule::rdbp f_x is detached
/// inside the second distance.
IntraClassTerms<torch::Tensor> intra_class_loss(const torch::Tensor& f_x, const torch::Tensor& f_xpr,
                                                const torch::Tensor& f_xpf, GradientRule rule);

IntraClassTerms<double> intra_class_loss(std::span<const float> f_x, std::span<const float> f_xpr,
                                         std::span<const float> f_xpf);

/// Gradient of terms.total w.r.t. params (zeros for parameters the loss does not reach).
/// Throws std::logic_error when the loss carries no graph.
std::vector<torch::Tensor> rdbp_backward(const IntraClassTerms<torch::Tensor>& terms,
                                         const std::vector<torch::Tensor>& params);

/// Norms of d total / d f for the three feature paths (x, x_pr, x_pf).
std::array<double, 3> branch_gradient_norms(const torch::Tensor& f_x, const torch::Tensor& f_xpr,
                                            const torch::Tensor& f_xpf, GradientRule rule);

}  // namespace fesr
