#include "fesr/datasets.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <numeric>
#include <algorithm>

using namespace fesr;

namespace {
std::filesystem::path write_manifest(const std::string& name, const std::string& body) {
    const auto dir = test::scratch_dir(name);
    std::ofstream(dir / "manifest.tsv") << body;
    return dir / "manifest.tsv";
}
}  // namespace

TEST_CASE("manifest errors name the line") {
    const auto bad_class = write_manifest("m1", "#K=2 size=32 channels=1\na.png\ts1\t0\nb.png\ts1\t2\n");
    try {
        load_manifest(bad_class);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    const auto dup = write_manifest("m2", "#K=2 size=32 channels=1\na.png\ts1\t0\na.png\ts2\t1\n");
    CHECK_THROWS_AS(load_manifest(dup), DataError);
    const auto malformed = write_manifest("m3", "#K=2 size=32 channels=1\na.png\ts1\n");
    CHECK_THROWS_AS(load_manifest(malformed), DataError);
    const auto header = write_manifest("m4", "K=2\n");
    CHECK_THROWS_AS(load_manifest(header), DataError);
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.tsv"), DataError);
}

TEST_CASE("manifest save/load round trip") {
    DatasetManifest m;
    m.class_count = 3;
    m.image_size = 32;
    m.channels = 1;
    m.entries = {{"x/a.png", "s1", 0}, {"x/b.png", "s2", 2}};
    const auto dir = test::scratch_dir("m5");
    save_manifest(m, dir / "manifest.tsv");
    const auto back = load_manifest(dir / "manifest.tsv");
    CHECK((back.entries == m.entries));
    CHECK(back.class_count == 3);
    CHECK(back.root == dir);
}

TEST_CASE("folds are subject-independent, balanced and seeded") {
    auto toy = test::make_toy(200, 2, {1.0f}, 10);
    const auto& split = toy->split;
    std::vector<int> per_fold(10, 0);
    for (const auto& [s, f] : split.fold_of_subject) per_fold[static_cast<std::size_t>(f)]++;
    for (int n : per_fold) CHECK(n == 20);
    for (int f = 0; f < 10; ++f) {
        std::set<std::string> train_s, test_s;
        for (auto i : split.train[static_cast<std::size_t>(f)]) train_s.insert(toy->manifest.entries[i].subject_id);
        for (auto i : split.test[static_cast<std::size_t>(f)]) test_s.insert(toy->manifest.entries[i].subject_id);
        for (const auto& s : test_s) CHECK(train_s.count(s) == 0);
        CHECK(split.train[static_cast<std::size_t>(f)].size() + split.test[static_cast<std::size_t>(f)].size() ==
              toy->manifest.entries.size());
    }
    CHECK(make_folds(toy->manifest, 10, 7).fold_of_subject == split.fold_of_subject);
    CHECK(make_folds(toy->manifest, 10, 8).fold_of_subject != split.fold_of_subject);
    CHECK_THROWS(make_folds(toy->manifest, 201, 7));

    auto uneven = test::make_toy(23, 2, {1.0f}, 5);
    std::vector<int> sizes(5, 0);
    for (const auto& [s, f] : uneven->split.fold_of_subject) sizes[static_cast<std::size_t>(f)]++;
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);

    const auto dir = test::scratch_dir("folds");
    export_folds(split, dir / "folds.tsv");
    CHECK(test::read_file(dir / "folds.tsv").find("toy0000\t") != std::string::npos);
}

TEST_CASE("pair sampling stays in class and is uniform over partners") {
    DatasetManifest m;
    m.class_count = 2;
    for (int i = 0; i < 5; ++i) m.entries.push_back({"a" + std::to_string(i), "s" + std::to_string(i), 0});
    m.entries.push_back({"b0", "s0", 1});
    m.entries.push_back({"b1", "s1", 1});
    m.entries.push_back({"c0", "s9", 1});
    std::vector<std::size_t> all(m.entries.size());
    std::iota(all.begin(), all.end(), 0);

    PairSampler sampler(m, {0, 1, 2, 3, 4, 5, 6});
    auto rng = make_rng(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 10000; ++i) counts[sampler.partner(0, rng)]++;
    CHECK(counts[0] == 0);
    for (int k = 1; k < 5; ++k) CHECK(std::abs(counts[static_cast<std::size_t>(k)] / 10000.0 - 0.25) <= 0.03);
    for (int i = 0; i < 50; ++i) CHECK(sampler.partner(5, rng) == 6);

    PairSampler whole(m, all);
    for (int i = 0; i < 200; ++i) {
        const auto a = static_cast<std::size_t>(i) % all.size();
        CHECK(m.entries[whole.partner(a, rng)].class_index == m.entries[a].class_index);
    }
    PairSampler lonely(m, {0, 5});
    CHECK(lonely.partner(5, rng) == 5);

    PairSampler same_subject(m, all, true);
    CHECK(same_subject.partner(0, rng) == 0);  // s0 has one class-0 image

    std::vector<Image> imgs(m.entries.size(), Image(1, 2, 2));
    for (std::size_t i = 0; i < imgs.size(); ++i) imgs[i].pixels[0] = static_cast<float>(i);
    const auto [x, xpr] = sample_pair(m, imgs, {5, 6}, 5, rng);
    CHECK(x.pixels[0] == 5.0f);
    CHECK(xpr.pixels[0] == 6.0f);
}

TEST_CASE("batch schedule") {
    DatasetManifest m;
    m.class_count = 2;
    for (int i = 0; i < 100; ++i) m.entries.push_back({"p" + std::to_string(i), "s" + std::to_string(i % 10), i % 2});
    std::vector<std::size_t> all(100);
    std::iota(all.begin(), all.end(), 0);
    BatchSchedule s(m, all, 16, 5);
    CHECK(s.batches_per_epoch() == 6);
    BatchSchedule same(m, all, 16, 5);
    std::set<std::size_t> seen;
    for (int t = 0; t < 6; ++t) {
        const auto b = s.batch(t);
        CHECK(b.indices == same.batch(t).indices);
        CHECK(b.pair_indices == same.batch(t).pair_indices);
        for (std::size_t i = 0; i < b.indices.size(); ++i) {
            CHECK(b.labels[i] == m.entries[b.indices[i]].class_index);
            CHECK(m.entries[b.pair_indices[i]].class_index == b.labels[i]);
            CHECK(seen.insert(b.indices[i]).second);
        }
    }
    CHECK(seen.size() == 96);
    CHECK(s.batch(6).indices != s.batch(0).indices);  // next epoch reshuffles
    CHECK(BatchSchedule(m, all, 16, 6).batch(0).indices != s.batch(0).indices);
    CHECK_THROWS(BatchSchedule(m, {}, 16, 5));

    std::vector<Image> imgs(100, Image(1, 2, 2));
    BatchIterator it(s, imgs);
    int batches = 0;
    while (auto item = it.next()) {
        CHECK(item->images.size() == 16);
        ++batches;
    }
    CHECK(batches == 6);
    CHECK(it.next().has_value());
}
