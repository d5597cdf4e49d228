#pragma once

#include "fesr/labelcodes.hpp"

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <vector>

namespace fesr::test {

/// Two-layer tanh network in double precision.
struct TinyNet : torch::nn::Module {
    torch::nn::Linear l1{nullptr}, l2{nullptr};
    TinyNet(int in, int hidden, int out) {
        l1 = register_module("l1", torch::nn::Linear(in, hidden));
        l2 = register_module("l2", torch::nn::Linear(hidden, out));
        to(torch::kFloat64);
    }
    torch::Tensor forward(const torch::Tensor& x) { return l2(torch::tanh(l1(x))); }
};

struct GradCheck {
    int checked = 0;
    double worst = 0.0;
    bool ok = true;
};

/// Compares autograd against central differences (step 1e-4) on `coords` random coordinates.
/// A coordinate passes with relative error <= tol, or absolute error <= 1e-8 when both sides
/// are essentially zero.
inline GradCheck finite_difference_check(const std::function<torch::Tensor()>& loss,
                                         const std::vector<torch::Tensor>& params, int coords, std::uint64_t seed,
                                         double tol = 1e-3, double step = 1e-4) {
    const auto analytic = torch::autograd::grad({loss()}, params, {}, false, false, true);
    auto rng = make_rng(seed, 0xfd);
    std::vector<std::pair<std::size_t, std::int64_t>> all;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::int64_t j = 0; j < params[i].numel(); ++j) all.emplace_back(i, j);
    }
    std::shuffle(all.begin(), all.end(), rng);
    if (static_cast<int>(all.size()) > coords) all.resize(static_cast<std::size_t>(coords));
    GradCheck r;
    // losses such as the gradient penalty differentiate internally, so grad mode stays on
    auto set = [&](std::size_t i, std::int64_t j, double value) {
        torch::NoGradGuard ng;
        params[i].view(-1)[j] = value;
    };
    for (auto [i, j] : all) {
        const double orig = params[i].view(-1)[j].item<double>();
        set(i, j, orig + step);
        const double up = loss().item<double>();
        set(i, j, orig - step);
        const double down = loss().item<double>();
        set(i, j, orig);
        const double numeric = (up - down) / (2 * step);
        const double a = analytic[i].defined() ? analytic[i].view(-1)[j].item<double>() : 0.0;
        const double err = std::abs(a - numeric);
        const double rel = err / std::max({std::abs(a), std::abs(numeric), 1e-300});
        if (err > 1e-8) {
            r.worst = std::max(r.worst, rel);
            r.ok = r.ok && rel <= tol;
        }
        ++r.checked;
    }
    return r;
}

}  // namespace fesr::test
