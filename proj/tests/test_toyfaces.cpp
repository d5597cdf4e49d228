#include "fesr/datasets.hpp"
#include "fesr/image_io.hpp"
#include "fesr/kernels.hpp"
#include "fesr/toyfaces.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace fesr;

namespace {
double l1(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
    return s / static_cast<double>(a.size());
}
}  // namespace

TEST_CASE("render is deterministic and in range") {
    const auto id = ToyIdentity::sample(7, 3);
    const auto e = ToyExpressionSpec::for_class(0, 0.8f);
    for (int size : {32, 64, 128}) {
        const auto a = render(id, e, size);
        const auto b = render(id, e, size);
        CHECK(a == b);
        for (float p : a.pixels) CHECK((p >= -1.0f && p <= 1.0f));
    }
    CHECK(render(id, e, 32, 3).channels == 3);
    CHECK_THROWS_AS(render(id, e, 48), DataError);
}

TEST_CASE("intensity 0 renders the neutral face for every class") {
    const auto id = ToyIdentity::sample(7, 11);
    const auto happy = render(id, ToyExpressionSpec::for_class(0, 0.0f), 32);
    for (int c = 1; c < kMaxToyClasses; ++c) {
        CHECK(render(id, ToyExpressionSpec::for_class(c, 0.0f), 32) == happy);
    }
}

TEST_CASE("happy and sad differ in the mouth region") {
    const auto id = ToyIdentity::sample(7, 5);
    const auto happy = render(id, ToyExpressionSpec::for_class(0, 1.0f), 32);
    const auto sad = render(id, ToyExpressionSpec::for_class(1, 1.0f), 32);
    CHECK(l1(happy, sad) > 0.01);
    double mh = 0.0, ms = 0.0;
    for (int y = 20; y < 28; ++y) {
        for (int x = 8; x < 24; ++x) {
            mh += happy.at(0, y, x);
            ms += sad.at(0, y, x);
        }
    }
    CHECK(mh != ms);
}

TEST_CASE("serial and parallel rasterizers agree exactly") {
    const auto g = face_geometry(ToyIdentity::sample(1, 2), ToyExpressionSpec::for_class(2, 0.7f));
    for (int size : {32, 128}) {
        for (int c : {1, 3}) {
            Image a(c, size, size), b(c, size, size);
            kernels::render_serial(g, a);
            kernels::render_parallel(g, b);
            CHECK(a == b);
        }
    }
}

TEST_CASE("generate_dataset counts, histogram and byte-identical reruns") {
    ToyDatasetOptions o;  // 200 ids, K = 4, intensities 0.6/0.8/1.0, 32 px, seed 7
    const auto d1 = test::scratch_dir("toy_a");
    const auto d2 = test::scratch_dir("toy_b");
    const auto m = generate_dataset(o, d1);
    generate_dataset(o, d2);
    CHECK(m.entries.size() == 2400);
    std::map<int, int> hist;
    for (const auto& e : m.entries) hist[e.class_index]++;
    for (int c = 0; c < 4; ++c) CHECK(hist[c] == 600);
    for (std::size_t i = 0; i < m.entries.size(); i += 97) {
        CHECK(test::read_file(d1 / m.entries[i].path) == test::read_file(d2 / m.entries[i].path));
    }
    CHECK(test::read_file(d1 / "manifest.tsv") == test::read_file(d2 / "manifest.tsv"));
    const auto loaded = load_manifest(d1 / "manifest.tsv");
    CHECK((loaded.entries == m.entries));
    CHECK(read_png(d1 / m.entries[5].path).height == 32);
}

TEST_CASE("identities are distinguishable") {
    const auto neutral = ToyExpressionSpec::for_class(0, 0.0f);
    for (int a = 0; a < 20; ++a) {
        for (int b = a + 1; b < 20; ++b) {
            CHECK(l1(render(ToyIdentity::sample(7, a), neutral, 32), render(ToyIdentity::sample(7, b), neutral, 32)) >
                  0.0);
        }
    }
}

TEST_CASE("nearest-centroid on raw pixels is above chance but not perfect") {
    for (const auto& intensities : {std::vector<float>{0.6f, 0.8f, 1.0f}, std::vector<float>{0.15f, 0.3f, 0.45f}}) {
        auto toy = test::make_toy(200, 4, intensities);
        const auto& train = toy->split.train[0];
        const auto& test_idx = toy->split.test[0];
        const std::size_t n = toy->images[0].size();
        std::vector<std::vector<double>> centroid(4, std::vector<double>(n, 0.0));
        std::vector<int> count(4, 0);
        for (auto i : train) {
            const int c = toy->manifest.entries[i].class_index;
            for (std::size_t p = 0; p < n; ++p) centroid[static_cast<std::size_t>(c)][p] += toy->images[i].pixels[p];
            count[static_cast<std::size_t>(c)]++;
        }
        int correct = 0;
        for (auto i : test_idx) {
            int best = -1;
            double best_d = 1e300;
            for (int c = 0; c < 4; ++c) {
                double d = 0.0;
                for (std::size_t p = 0; p < n; ++p) {
                    const double m = centroid[static_cast<std::size_t>(c)][p] / count[static_cast<std::size_t>(c)];
                    d += (toy->images[i].pixels[p] - m) * (toy->images[i].pixels[p] - m);
                }
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            correct += best == toy->manifest.entries[i].class_index;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(test_idx.size());
        MESSAGE("nearest-centroid accuracy " << acc << " at intensity " << intensities[0]);
        CHECK(acc > 0.25);
        CHECK(acc < 1.0);
    }
}
