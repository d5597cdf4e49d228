// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments pick criteria by number.

#include "fesr/evaluation.hpp"
#include "fesr/losses.hpp"
#include "fesr/metrics.hpp"
#include "fesr/rdbp.hpp"
#include "fesr/trainer.hpp"

#include "gradcheck.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

using namespace fesr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
    std::vector<torch::Tensor> out;
    for (const auto& p : params) out.push_back(p.detach().clone());
    return out;
}

bool same(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i])) return false;
    return a.size() == b.size();
}

const test::ToySet& small_toy() {
    static const auto t = test::make_toy(20, 4, {0.6f, 0.8f, 1.0f});
    return *t;
}

// ---------------------------------------------------------------- 1

torch::Tensor plain_mean_dist(const torch::Tensor& a, const torch::Tensor& b) {
    return (a - b).pow(2).sum(-1).sqrt().mean();
}

Outcome rdbp_correctness() {
    const auto t0 = Clock::now();
    torch::manual_seed(3);
    test::TinyNet ext(3, 4, 3);
    const auto params = ext.parameters();
    std::int64_t count = 0;
    for (auto& p : params) count += p.numel();

    int trials = 0, coords = 0, bad = 0;
    double worst = 0;
    for (; trials < 120; ++trials) {
        {
            torch::NoGradGuard ng;
            for (auto& p : params) p.copy_(torch::randn_like(p));
        }
        const std::int64_t b = 1 + trials % 4;
        const auto x = torch::randn({b, 3}, torch::kFloat64);
        const auto xpr = torch::randn({b, 3}, torch::kFloat64);
        const auto xpf = torch::randn({b, 3}, torch::kFloat64);
        const auto analytic = rdbp_backward(
            intra_class_loss(ext.forward(x), ext.forward(xpr), ext.forward(xpf), GradientRule::rdbp), params);
        torch::NoGradGuard ng;
        const auto frozen = ext.forward(x).clone();
        auto loss = [&] {
            return (plain_mean_dist(ext.forward(x), ext.forward(xpr)) + plain_mean_dist(frozen, ext.forward(xpf)))
                .item<double>();
        };
        const double h = 1e-5;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto flat = params[i].view(-1);
            for (std::int64_t j = 0; j < flat.numel(); ++j, ++coords) {
                const double orig = flat[j].item<double>();
                flat[j] = orig + h;
                const double up = loss();
                flat[j] = orig - h;
                const double down = loss();
                flat[j] = orig;
                const double numeric = (up - down) / (2 * h);
                const double a = analytic[i].view(-1)[j].item<double>();
                const double err = std::abs(a - numeric);
                if (err <= 1e-8) continue;
                const double rel = err / std::max(std::abs(a), std::abs(numeric));
                worst = std::max(worst, rel);
                bad += rel > 1e-3;
            }
        }
    }

    // constructed triple where the two rules disagree
    torch::manual_seed(5);
    test::TinyNet w(3, 4, 3);
    const auto wp = w.parameters();
    const auto x = torch::tensor({{1.0, 0.0, -1.0}}, torch::kFloat64);
    const auto xpr = torch::tensor({{0.9, 0.1, -1.1}}, torch::kFloat64);
    const auto xpf = torch::tensor({{-1.0, 2.0, 0.5}}, torch::kFloat64);
    auto grads = [&](GradientRule r) {
        return rdbp_backward(intra_class_loss(w.forward(x), w.forward(xpr), w.forward(xpf), r), wp);
    };
    const auto gr = grads(GradientRule::rdbp), gf = grads(GradientRule::full);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < gr.size(); ++i) {
        dot += (gr[i] * gf[i]).sum().item<double>();
        na += gr[i].pow(2).sum().item<double>();
        nb += gf[i].pow(2).sum().item<double>();
    }
    const double cosine = dot / std::sqrt(na * nb);
    const double secs = seconds_since(t0);
    return {count <= 50 && bad == 0 && trials >= 100 && cosine < 1 - 1e-6 && secs < 10,
            std::to_string(count) + " params, " + std::to_string(trials) + " trials, " + std::to_string(coords) +
                " coords, worst rel err " + fmt(worst, 6) + ", rdbp/full cosine " + fmt(cosine, 6) + ", " +
                fmt(secs, 2) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome gp_oracle() {
    const auto t0 = Clock::now();
    auto rng = make_rng(1);
    double worst3 = 0, worst1 = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t b = 1 + trial % 9, n = 2 + trial;
        auto w = torch::randn({n}, torch::kFloat64);
        auto critic = [&](const torch::Tensor& m) { return (m.flatten(1) * w).sum(1); };
        const auto real = torch::randn({b, n}, torch::kFloat64) * 3;
        const auto fake = torch::randn({b, n}, torch::kFloat64);
        w = w / w.norm() * 3.0;
        worst3 = std::max(worst3, std::abs(gradient_penalty(critic, real, fake, 10.0, rng).item<double>() - 40.0));
        w = w / w.norm();
        worst1 = std::max(worst1, std::abs(gradient_penalty(critic, real, fake, 10.0, rng).item<double>()));
    }
    const double secs = seconds_since(t0);
    return {worst3 <= 1e-6 && worst1 <= 1e-9 && secs < 1,
            "max |gp-40| " + fmt(worst3, 12) + ", max |gp| at unit norm " + fmt(worst1, 12) + ", " + fmt(secs, 3) +
                " s"};
}

// ---------------------------------------------------------------- 3

Outcome aggregation_audit() {
    const std::array<double, 6> l{1, 10, 5, 1, 1, 0.001};
    const auto jl = *variant_spec("FESR_JL");
    std::map<std::string, double> ones;
    for (const auto& n : term_names())
        if (n != "cls_R_f_G") ones[n] = 1.0;
    const auto s1 = aggregate(ones, l, Stage::pretrain, jl);
    const auto s2 = aggregate(ones, l, Stage::joint, jl);
    bool ok = *s1.L_G == 18.0 && *s2.L_G == 19.0 && *s2.L_R == 1.001;

    double worst = 0;
    for (int j = 0; j < 6; ++j) {
        std::map<std::string, torch::Tensor> terms, leaf;
        for (const auto& n : term_names()) {
            leaf[n] = torch::tensor(1.0, torch::kFloat64).requires_grad_(true);
            terms[n] = leaf[n] * 1.0;
        }
        auto lz = l;
        lz[static_cast<std::size_t>(j)] = 0.0;
        const auto t = aggregate(terms, lz, Stage::joint, jl);
        const auto all = *t.L_G + *t.L_Dimg + *t.L_Dz + *t.L_R;
        static const std::vector<std::vector<std::string>> gated{
            {"adv_g_z"}, {"rec"}, {"id"}, {"cls_D_f", "cls_R_f_G"}, {"adv_d_img"}, {"intra"}};
        for (const auto& g : gated[static_cast<std::size_t>(j)]) {
            const auto grad = torch::autograd::grad({all}, {leaf[g]}, {}, true, false, true)[0];
            if (grad.defined()) worst = std::max(worst, grad.abs().item<double>());
        }
    }
    ok = ok && worst <= 1e-9;
    return {ok, "L_G " + fmt(*s1.L_G, 3) + " / " + fmt(*s2.L_G, 3) + ", L_R " + fmt(*s2.L_R, 6) +
                    ", largest gradient through a zeroed weight " + fmt(worst, 12)};
}

// ---------------------------------------------------------------- 4

Outcome schedule() {
    const auto t0 = Clock::now();
    Trainer tr(test::tiny_config("FESR_JL", 5, 10), small_toy().data, small_toy().split.train[0]);
    bool ok = true;
    std::string first_problem;
    for (int t = 0; t < 10; ++t) {
        const auto before = snapshot(tr.networks().rec->trainable_parameters());
        const auto rep = tr.step();
        const bool unchanged = same(before, tr.networks().rec->trainable_parameters());
        const bool good = t < 5 ? unchanged && !rep.has("cls_R_f") : !unchanged && rep.has("cls_R_f");
        if (!good && ok) first_problem = " (first problem at t=" + std::to_string(t) + ")";
        ok = ok && good;
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 30, "R frozen for t<5, updated from t=5, cls_R_f only in stage 2" + first_problem + ", " +
                                 fmt(secs, 2) + " s"};
}

// ---------------------------------------------------------------- 5

Outcome shape_check(const ExperimentConfig& cfg, const std::string& label) {
    const auto shapes = shape_audit(cfg);
    auto last_of = [&](const std::string& net) {
        std::vector<std::int64_t> s;
        for (const auto& l : shapes)
            if (l.network == net) s = l.shape;
        return s;
    };
    const std::int64_t c = cfg.channels, n = cfg.image_size, k = cfg.num_classes;
    bool ok = last_of("G_enc") == std::vector<std::int64_t>{1, cfg.latent_dim} &&
              last_of("G_dec") == std::vector<std::int64_t>{1, c, n, n} &&
              last_of("D_img/adv").size() == 4 && last_of("D_img/cls") == std::vector<std::int64_t>{1, k} &&
              last_of("D_z") == std::vector<std::int64_t>{1, 1} &&
              last_of("R_ext") == std::vector<std::int64_t>{1, cfg.feature_dim} &&
              last_of("R_cls") == std::vector<std::int64_t>{1, k};
    // latent stays inside the tanh range on a real forward pass
    torch::manual_seed(1);
    Encoder enc(cfg);
    torch::NoGradGuard ng;
    const auto z = enc(torch::rand({2, c, n, n}) * 2 - 1);
    ok = ok && z.abs().max().item<float>() < 1.0f && z.size(1) == 64;
    return {ok, label + ": " + std::to_string(shapes.size()) + " layers, latent " + std::to_string(z.size(1)) +
                    ", R_ext features " + std::to_string(last_of("R_ext").back())};
}

Outcome shapes() {
    const auto paper = shape_check(ExperimentConfig::paper_scale(), "128x128");
    const auto desk = shape_check(ExperimentConfig{}, "32x32");
    const bool feat512 = ExperimentConfig::paper_scale().feature_dim == 512;
    return {paper.pass && desk.pass && feat512, paper.detail + "; " + desk.detail};
}

// ---------------------------------------------------------------- 6 and 7

const test::ToySet& ablation_toy() {
    static const auto t = [] {
        auto s = test::make_toy(200, 4, {0.15f, 0.3f, 0.45f}, 5, 7);
        s->split = make_folds(s->manifest, 5, 1);
        return s;
    }();
    return *t;
}

ExperimentConfig ablation_config(const std::string& variant, std::uint64_t seed) {
    ExperimentConfig c;
    c.variant = variant;
    c.seed = seed;
    c.p_pre = 1000;
    c.p_max = 3000;
    c.checkpoint_every = 500;
    return c;
}

struct VariantRun {
    double accuracy = 0;
    std::optional<double> dist_first_joint;
    std::optional<double> dist_final;
    double seconds = 0;
};

std::map<std::pair<std::string, std::uint64_t>, VariantRun>& ablation_cache() {
    static std::map<std::pair<std::string, std::uint64_t>, VariantRun> cache;
    return cache;
}

VariantRun run_variant(const std::string& variant, std::uint64_t seed) {
    auto& cache = ablation_cache();
    if (auto it = cache.find({variant, seed}); it != cache.end()) return it->second;
    const auto& toy = ablation_toy();
    const auto cfg = ablation_config(variant, seed);
    const auto& test_entries = toy.split.test[0];
    VariantRun r;
    const auto t0 = Clock::now();
    RunOptions o;
    o.out_dir = fs::temp_directory_path() / ("fesr_acceptance_" + variant + "_" + std::to_string(seed));
    o.resume = false;
    const bool measure = variant == "FESR_JL";
    o.on_checkpoint = [&](const Trainer& tr, std::int64_t t) {
        if (!measure || t <= cfg.p_pre) return;
        auto& nets = const_cast<Trainer&>(tr).networks();
        const double d = real_synthetic_distance(cfg, nets, toy.data, test_entries, 1234);
        if (!r.dist_first_joint) r.dist_first_joint = d;
        r.dist_final = d;
        std::printf("    %s seed %llu t=%lld real/synthetic feature distance %.4f\n", variant.c_str(),
                    static_cast<unsigned long long>(seed), static_cast<long long>(t), d);
        std::fflush(stdout);
    };
    std::unique_ptr<Trainer> kept;
    run(cfg, toy.data, toy.split.train[0], o, &kept);
    const auto x = toy.data.images.index_select(
        0, torch::tensor(std::vector<std::int64_t>(test_entries.begin(), test_entries.end())));
    const auto pred = predict(kept->networks().rec, x);
    std::vector<int> labels;
    for (auto i : test_entries) labels.push_back(toy.manifest.entries[i].class_index);
    r.accuracy = accuracy(pred, labels);
    r.seconds = seconds_since(t0);
    std::printf("    %s seed %llu accuracy %.4f (%.0f s)\n", variant.c_str(), static_cast<unsigned long long>(seed),
                r.accuracy, r.seconds);
    std::fflush(stdout);
    fs::remove_all(o.out_dir);
    cache[{variant, seed}] = r;
    return r;
}

Outcome joint_ordering() {
    double base = 0, jl = 0, nordbp = 0, slowest = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        for (const char* v : {"BASELINE", "FESR_JL", "FESR_JL-RDBP"}) {
            const auto r = run_variant(v, seed);
            slowest = std::max(slowest, r.seconds);
            (std::string(v) == "BASELINE" ? base : std::string(v) == "FESR_JL" ? jl : nordbp) += r.accuracy / 3;
        }
    }
    const bool ok = jl >= base + 0.01 && jl >= nordbp && slowest <= 1800;
    return {ok, "3-seed mean accuracy: BASELINE " + fmt(100 * base, 2) + "%, FESR_JL " + fmt(100 * jl, 2) +
                    "%, FESR_JL-RDBP " + fmt(100 * nordbp, 2) + "%; slowest run " + fmt(slowest, 0) + " s"};
}

Outcome contraction() {
    std::vector<double> ratios;
    std::string parts;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto r = run_variant("FESR_JL", seed);
        if (!r.dist_first_joint || !r.dist_final) return {false, "no joint-stage checkpoint"};
        ratios.push_back(*r.dist_final / *r.dist_first_joint);
        parts += (parts.empty() ? "" : ", ") + fmt(*r.dist_first_joint, 3) + "->" + fmt(*r.dist_final, 3);
    }
    const double m = median3(ratios);
    return {m <= 0.7, "median final/first-joint distance ratio " + fmt(m, 3) + " (" + parts + ")"};
}

// ---------------------------------------------------------------- 8

Outcome metric_oracles() {
    Image a(1, 32, 32, 0.0f), b(1, 32, 32, 0.2f);
    const double p = psnr(a, b);
    Image r(3, 32, 32);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<float> u(-1, 1);
    for (auto& v : r.pixels) v = u(gen);
    const double s = ssim(r, r);

    std::uniform_real_distribution<double> ud(-1, 1);
    int matched = 0;
    for (int set = 0; set < 100; ++set) {
        const int n = 2 + set % 50;
        std::vector<ScoredPair> pairs;
        for (int i = 0; i < n; ++i) {
            const double sim = set % 4 == 0 ? std::round(ud(gen) * 3) / 3 : ud(gen);
            pairs.push_back({sim, bool(gen() & 1)});
        }
        pairs[0].same_identity = true;
        pairs[1].same_identity = false;
        double best = 0;
        std::vector<double> cuts{1e300};
        for (const auto& q : pairs) cuts.push_back(q.similarity);
        for (double th : cuts) {
            int ok = 0;
            for (const auto& q : pairs) ok += (q.similarity >= th) == q.same_identity;
            best = std::max(best, double(ok) / n);
        }
        matched += verification_rate(pairs).rate == best;
    }
    return {std::abs(p - 20.0) <= 0.01 && std::abs(s - 1.0) <= 1e-9 && matched == 100,
            "PSNR " + fmt(p, 4) + " dB, SSIM(a,a) " + fmt(s, 12) + ", verification sweep matched " +
                std::to_string(matched) + "/100"};
}

// ---------------------------------------------------------------- 9

Outcome determinism() {
    auto cfg = test::tiny_config("FESR_JL", 20, 40);
    cfg.checkpoint_every = 20;
    const auto& toy = small_toy();
    auto dir = [](const char* n) { return test::scratch_dir(std::string("acc9_") + n); };
    const auto a = dir("a"), b = dir("b"), c = dir("c");
    run(cfg, toy.data, toy.split.train[0], {.out_dir = a});
    run(cfg, toy.data, toy.split.train[0], {.out_dir = b});
    RunOptions cut{.out_dir = c};
    cut.stop_at = 31;
    run(cfg, toy.data, toy.split.train[0], cut);
    run(cfg, toy.data, toy.split.train[0], {.out_dir = c});
    const auto fa = test::read_file(checkpoint_path(a, 40));
    const bool twin = !fa.empty() && fa == test::read_file(checkpoint_path(b, 40));
    const bool resumed = fa == test::read_file(checkpoint_path(c, 40));
    return {twin && resumed, std::string("identical-seed runs ") + (twin ? "byte-identical" : "differ") +
                                 ", resumed-from-t=20 run " + (resumed ? "byte-identical" : "differs") + " (" +
                                 std::to_string(fa.size()) + " bytes)"};
}

// ---------------------------------------------------------------- 10

Outcome prior_contract() {
    const auto& toy = small_toy();
    auto cfg = test::tiny_config("FG", 10, 20);
    std::unique_ptr<Trainer> tr;
    const auto d = test::scratch_dir("acc10");
    run(cfg, toy.data, toy.split.train[0], {.out_dir = d}, &tr);
    const auto x = synthesize_prior(tr->networks(), cfg, 1000, 5);
    const bool in_range = x.size(0) == 1000 && torch::isfinite(x).all().item<bool>() && x.min().item<float>() >= -1 &&
                          x.max().item<float>() <= 1;

    int reports = 0, leaked = 0;
    RunOptions o{.out_dir = test::scratch_dir("acc10_fgdz")};
    o.on_step = [&](const LossReport& r) {
        ++reports;
        leaked += r.has("adv_g_z") || r.has("adv_d_z") || r.totals.L_Dz.has_value();
    };
    run(test::tiny_config("FG-Dz", 10, 20), toy.data, toy.split.train[0], o);
    return {in_range && reports == 20 && leaked == 0,
            "1000 prior decodes in [" + fmt(x.min().item<float>(), 3) + ", " + fmt(x.max().item<float>(), 3) +
                "]; FG-Dz reports with latent terms: " + std::to_string(leaked) + "/" + std::to_string(reports)};
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"RDBP gradients match frozen-branch finite differences and differ from full back-propagation",
         rdbp_correctness},
        {"gradient-penalty oracle on linear critics", gp_oracle},
        {"loss aggregation and per-weight gradient removal", aggregation_audit},
        {"two-stage schedule", schedule},
        {"shape audit at 128x128 and 32x32", shapes},
        {"joint learning ordering on the toy faces", joint_ordering},
        {"intra-class contraction over joint training", contraction},
        {"metric oracles", metric_oracles},
        {"determinism and bit-exact resume", determinism},
        {"prior synthesis range and FG-Dz wiring", prior_contract},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %d: %s | %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
