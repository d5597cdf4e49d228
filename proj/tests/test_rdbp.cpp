#include "fesr/losses.hpp"
#include "fesr/rdbp.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace fesr;

namespace {

std::vector<float> v(std::initializer_list<float> x) { return x; }

double flat_cosine(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += (a[i] * b[i]).sum().item<double>();
        na += a[i].pow(2).sum().item<double>();
        nb += b[i].pow(2).sum().item<double>();
    }
    return dot / std::sqrt(na * nb);
}

// mean ||a - b|| with ordinary sqrt, used as an independent surrogate
torch::Tensor plain_mean_dist(const torch::Tensor& a, const torch::Tensor& b) {
    return (a - b).pow(2).sum(-1).sqrt().mean();
}

}  // namespace

TEST_CASE("intra-class distances on plain vectors") {
    const auto r = intra_class_loss(v({0, 0}), v({3, 4}), v({1, 0}));
    CHECK(r.dist_r == doctest::Approx(5.0));
    CHECK(r.dist_rf == doctest::Approx(1.0));
    CHECK(r.total == r.dist_r + r.dist_rf);
    const auto z = intra_class_loss(v({1, 2, 3}), v({1, 2, 3}), v({1, 2, 3}));
    CHECK(z.total == 0.0);
    CHECK_THROWS(intra_class_loss(v({1, 2}), v({1}), v({1, 2})));

    auto f = torch::randn({4, 5});
    auto t = intra_class_loss(f, torch::randn({4, 5}), torch::randn({4, 5}), GradientRule::rdbp);
    CHECK(t.dist_r.item<float>() >= 0);
    CHECK(t.dist_rf.item<float>() >= 0);
    CHECK(t.total.item<float>() == (t.dist_r + t.dist_rf).item<float>());
    CHECK_THROWS(intra_class_loss(f, torch::randn({4, 6}), torch::randn({4, 5}), GradientRule::rdbp));
}

TEST_CASE("one-parameter extractor: frozen-branch and full gradients") {
    // f(v) = w v, x = 1, x_pr = 1, x_pf = 2, w = 1
    auto grad_for = [](GradientRule rule) {
        auto w = torch::ones({1}, torch::kFloat64).requires_grad_(true);
        const auto one = torch::ones({1, 1}, torch::kFloat64);
        const auto terms = intra_class_loss(one * w, one * w, 2 * one * w, rule);
        CHECK(terms.dist_rf.item<double>() == 1.0);
        return rdbp_backward(terms, {w})[0].item<double>();
    };
    // central differences of |c - 2w| with c held at w = 1, and of |w - 2w|
    const double h = 1e-4;
    const double frozen = (std::abs(1.0 - 2 * (1 + h)) - std::abs(1.0 - 2 * (1 - h))) / (2 * h);
    const double full = (std::abs((1 + h) - 2 * (1 + h)) - std::abs((1 - h) - 2 * (1 - h))) / (2 * h);
    CHECK(grad_for(GradientRule::rdbp) == doctest::Approx(frozen).epsilon(1e-9));
    CHECK(grad_for(GradientRule::full) == doctest::Approx(full).epsilon(1e-9));
    CHECK(std::abs(frozen - full) > 0.5);
}

TEST_CASE("coincident features give the zero subgradient") {
    auto a = torch::tensor({{1.0, -2.0}}, torch::kFloat64).requires_grad_(true);
    const auto n = safe_norm(a - a.detach());
    CHECK(n.item<double>() == 0.0);
    const auto g = torch::autograd::grad({n.sum()}, {a})[0];
    CHECK(g.abs().max().item<double>() == 0.0);
    auto b = torch::tensor({{3.0, 4.0}}, torch::kFloat64).requires_grad_(true);
    const auto gb = torch::autograd::grad({safe_norm(b).sum()}, {b})[0];
    CHECK(gb[0][0].item<double>() == doctest::Approx(0.6));
    CHECK(gb[0][1].item<double>() == doctest::Approx(0.8));
}

TEST_CASE("rdbp_backward needs a graph") {
    auto w = torch::ones({2}, torch::kFloat64).requires_grad_(true);
    const auto f = torch::randn({3, 2}, torch::kFloat64);
    const auto terms = intra_class_loss(f, f + 1, f - 1, GradientRule::rdbp);
    CHECK_THROWS_AS(rdbp_backward(terms, {w}), std::logic_error);
    // a parameter the loss never reaches gets zeros
    const auto used = f * w;
    const auto t2 = intra_class_loss(used, used + 1, used * 2, GradientRule::rdbp);
    auto unused = torch::ones({3}, torch::kFloat64).requires_grad_(true);
    const auto g = rdbp_backward(t2, {w, unused});
    CHECK(g[1].abs().sum().item<double>() == 0.0);
}

TEST_CASE("rdbp gradients match frozen-real-branch central differences") {
    torch::manual_seed(3);
    test::TinyNet ext(3, 4, 3);  // 31 parameters
    const auto params = ext.parameters();
    std::int64_t count = 0;
    for (auto& p : params) count += p.numel();
    CHECK(count <= 50);

    auto rng = make_rng(8);
    int failures = 0;
    double worst = 0;
    for (int trial = 0; trial < 120; ++trial) {
        {
            torch::NoGradGuard ng;
            for (auto& p : params) p.copy_(torch::randn_like(p));
        }
        const std::int64_t b = 1 + trial % 4;
        const auto x = torch::randn({b, 3}, torch::kFloat64);
        const auto xpr = torch::randn({b, 3}, torch::kFloat64);
        const auto xpf = torch::randn({b, 3}, torch::kFloat64);
        const auto terms = intra_class_loss(ext.forward(x), ext.forward(xpr), ext.forward(xpf), GradientRule::rdbp);
        const auto analytic = rdbp_backward(terms, params);

        // oracle: the real anchor's feature in the rf term is computed once and held fixed
        torch::Tensor frozen;
        {
            torch::NoGradGuard ng;
            frozen = ext.forward(x).clone();
        }
        auto loss = [&] {
            return plain_mean_dist(ext.forward(x), ext.forward(xpr)) + plain_mean_dist(frozen, ext.forward(xpf));
        };
        torch::NoGradGuard ng;
        const double h = 1e-5;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto flat = params[i].view(-1);
            for (std::int64_t j = 0; j < flat.numel(); ++j) {
                const double orig = flat[j].item<double>();
                flat[j] = orig + h;
                const double up = loss().item<double>();
                flat[j] = orig - h;
                const double down = loss().item<double>();
                flat[j] = orig;
                const double numeric = (up - down) / (2 * h);
                const double a = analytic[i].view(-1)[j].item<double>();
                const double err = std::abs(a - numeric);
                if (err <= 1e-8) continue;
                const double rel = err / std::max(std::abs(a), std::abs(numeric));
                worst = std::max(worst, rel);
                failures += rel > 1e-3;
            }
        }
        (void)rng;
    }
    INFO("worst relative error " << worst);
    CHECK(failures == 0);
}

TEST_CASE("detachment identity against an explicit stop-gradient surrogate") {
    torch::manual_seed(11);
    test::TinyNet ext(3, 4, 3);
    const auto params = ext.parameters();
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = torch::randn({4, 3}, torch::kFloat64);
        const auto xpr = torch::randn({4, 3}, torch::kFloat64);
        const auto xpf = torch::randn({4, 3}, torch::kFloat64);
        const auto terms = intra_class_loss(ext.forward(x), ext.forward(xpr), ext.forward(xpf), GradientRule::rdbp);
        const auto g = torch::autograd::grad({terms.dist_rf}, params, {}, false, false, true);
        const auto surrogate = plain_mean_dist(ext.forward(x).detach(), ext.forward(xpf));
        const auto s = torch::autograd::grad({surrogate}, params, {}, false, false, true);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto err = (g[i] - s[i]).abs();
            const auto tol = s[i].abs() * 1e-6 + 1e-12;
            CHECK((err <= tol).all().item<bool>());
        }
    }
}

TEST_CASE("rdbp and full back-propagation point in different directions") {
    torch::manual_seed(5);
    test::TinyNet ext(3, 4, 3);
    const auto params = ext.parameters();
    const auto x = torch::tensor({{1.0, 0.0, -1.0}}, torch::kFloat64);
    const auto xpr = torch::tensor({{0.9, 0.1, -1.1}}, torch::kFloat64);
    const auto xpf = torch::tensor({{-1.0, 2.0, 0.5}}, torch::kFloat64);
    auto grads = [&](GradientRule rule) {
        return rdbp_backward(intra_class_loss(ext.forward(x), ext.forward(xpr), ext.forward(xpf), rule), params);
    };
    const double c = flat_cosine(grads(GradientRule::rdbp), grads(GradientRule::full));
    INFO("cosine " << c);
    CHECK(c < 1 - 1e-6);

    const auto fx = torch::randn({2, 3}, torch::kFloat64);
    const auto fr = torch::randn({2, 3}, torch::kFloat64);
    const auto ff = torch::randn({2, 3}, torch::kFloat64);
    const auto nr = branch_gradient_norms(fx, fr, ff, GradientRule::rdbp);
    const auto nf = branch_gradient_norms(fx, fr, ff, GradientRule::full);
    CHECK(nr[1] == doctest::Approx(nf[1]));
    CHECK(nr[2] == doctest::Approx(nf[2]));
    CHECK(nr[0] != doctest::Approx(nf[0]));
}

TEST_CASE("zero intra weight leaves the classification-only recognition gradient") {
    torch::manual_seed(21);
    test::TinyNet ext(3, 4, 3);
    const auto params = ext.parameters();
    const auto x = torch::randn({6, 3}, torch::kFloat64);
    const auto xf = torch::randn({6, 3}, torch::kFloat64);
    const auto labels = torch::tensor(std::vector<std::int64_t>{0, 1, 2, 0, 1, 2});
    std::array<double, 6> l{1, 10, 5, 1, 1, 0.0};
    auto terms_for = [&] {
        const auto fx = ext.forward(x), ff = ext.forward(xf);
        const auto intra = intra_class_loss(fx, ext.forward(x.flip(0)), ff, GradientRule::rdbp);
        return std::map<std::string, torch::Tensor>{
            {"intra", intra.total}, {"cls_R_r", cls_ce(fx, labels)}, {"cls_R_f", cls_ce(ff, labels)}};
    };
    const auto with = *total_R(terms_for(), l, Stage::joint, *variant_spec("FESR_JL"));
    const auto without = *total_R(terms_for(), l, Stage::joint, *variant_spec("FESR_JL-IL"));
    const auto g1 = torch::autograd::grad({with}, params);
    const auto g2 = torch::autograd::grad({without}, params);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(torch::equal(g1[i], g2[i]));

    // and the real-only recognizer objective of BASELINE ignores intra entirely
    const auto base_terms = terms_for();
    const auto b1 = *total_R(base_terms, l, Stage::joint, *variant_spec("BASELINE"));
    const auto b2 = cls_ce(ext.forward(x), labels);
    const auto gb1 = torch::autograd::grad({b1}, params);
    const auto gb2 = torch::autograd::grad({b2}, params);
    for (std::size_t i = 0; i < gb1.size(); ++i) CHECK(torch::equal(gb1[i], gb2[i]));
}
