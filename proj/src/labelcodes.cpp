#include "fesr/labelcodes.hpp"

#include <cmath>
#include <stdexcept>

namespace fesr {

namespace {

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double open_unit(Rng& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double r = 0.0;
    while (r == 0.0) {
        r = dist(rng);
    }
    return r;
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(mix(mix(seed) ^ mix(stream + 0x51ed27ull))); }

ExpressionLabel one_hot(int class_index, int num_classes) {
    if (num_classes < 1 || class_index < 0 || class_index >= num_classes) {
        throw std::out_of_range("one_hot: class index " + std::to_string(class_index) + " outside [0, " +
                                std::to_string(num_classes) + ")");
    }
    return {class_index, num_classes};
}

IntensityCode intensity_code(std::span<const float> y, std::span<const float> v) {
    if (v.size() != y.size()) {
        throw std::invalid_argument("intensity_code: v has " + std::to_string(v.size()) + " entries, expected " +
                                    std::to_string(y.size()));
    }
    IntensityCode code;
    code.u.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0f && v[i] <= 1.0f)) {
            throw std::invalid_argument("intensity_code: v[" + std::to_string(i) + "] outside (0, 1]");
        }
        if (y[i] != 0.0f && y[i] != 1.0f) {
            throw std::invalid_argument("intensity_code: y must be binary");
        }
        code.u[i] = v[i] * (2.0f * y[i] - 1.0f);
    }
    return code;
}

IntensityCode intensity_code(const ExpressionLabel& label, std::span<const float> v) {
    const auto y = label.onehot();
    return intensity_code(std::span<const float>(y), v);
}

IntensitySampler IntensitySampler::fixed(std::vector<float> v) {
    for (float x : v) {
        if (!(x > 0.0f && x <= 1.0f)) {
            throw std::invalid_argument("IntensitySampler: fixed v entries must lie in (0, 1]");
        }
    }
    return {Mode::fixed_value, std::move(v), Rng{}};
}

IntensityCode sample_intensity(const ExpressionLabel& label, IntensitySampler& sampler) {
    if (sampler.mode == IntensitySampler::Mode::fixed_value) {
        return intensity_code(label, sampler.fixed_v);
    }
    std::vector<float> v(static_cast<std::size_t>(label.num_classes));
    for (auto& x : v) {
        x = static_cast<float>(open_unit(sampler.rng));
        if (x >= 1.0f) {  // float rounding of values just below 1
            x = std::nextafter(1.0f, 0.0f);
        }
    }
    return intensity_code(label, v);
}

ExpressionLabel sample_target_label(const ExpressionLabel& current, int num_classes, Rng& rng) {
    if (num_classes < 2) {
        throw std::invalid_argument("sample_target_label: need at least two classes");
    }
    std::uniform_int_distribution<int> dist(0, num_classes - 2);
    int r = dist(rng);
    if (r >= current.class_index) {
        ++r;
    }
    return {r, num_classes};
}

FaceLatent sample_prior(int n, Rng& rng) {
    if (n < 1) {
        throw std::invalid_argument("sample_prior: latent dimension must be >= 1");
    }
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FaceLatent z;
    z.g.resize(static_cast<std::size_t>(n));
    for (auto& x : z.g) {
        x = static_cast<float>(dist(rng));
    }
    return z;
}

}  // namespace fesr
