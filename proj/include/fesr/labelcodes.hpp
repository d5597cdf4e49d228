#pragma once

#include "fesr/datamodel.hpp"

#include <random>
#include <span>

namespace fesr {

using Rng = std::mt19937_64;

/// Deterministic stream derived from (seed, stream); used for per-iteration substreams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

ExpressionLabel one_hot(int class_index, int num_classes);

/// u = v * (2y - 1). Every v_i must lie in (0, 1].
IntensityCode intensity_code(const ExpressionLabel& label, std::span<const float> v);
/// Same map for any binary vector y.
IntensityCode intensity_code(std::span<const float> y, std::span<const float> v);

struct IntensitySampler {
    enum class Mode { random_per_sample, fixed_value };

    Mode mode = Mode::random_per_sample;
    std::vector<float> fixed_v;  // used in fixed_value mode, every entry in (0, 1]
    Rng rng;

    static IntensitySampler random(std::uint64_t seed) { return {Mode::random_per_sample, {}, make_rng(seed)}; }
    static IntensitySampler fixed(std::vector<float> v);
};

/// Draws v_i ~ U(0, 1) per component (random mode) or applies the fixed v.
IntensityCode sample_intensity(const ExpressionLabel& label, IntensitySampler& sampler);

/// Uniform over the K - 1 classes other than `current`.
ExpressionLabel sample_target_label(const ExpressionLabel& current, int num_classes, Rng& rng);

/// n i.i.d. draws from U(-1, 1).
FaceLatent sample_prior(int n, Rng& rng);

}  // namespace fesr
