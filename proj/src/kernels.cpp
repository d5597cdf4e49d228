#include "fesr/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace fesr::kernels {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

float coverage(float signed_distance, float pixel_size) noexcept {
    return std::clamp(0.5f - signed_distance / pixel_size, 0.0f, 1.0f);
}

// Approximate signed distance to an axis-aligned ellipse (scaled-circle metric).
float ellipse_sd(float u, float v, float cx, float cy, float rx, float ry) noexcept {
    const float dx = (u - cx) / rx;
    const float dy = (v - cy) / ry;
    const float r = std::sqrt(dx * dx + dy * dy);
    return (r - 1.0f) * std::min(rx, ry);
}

float segment_distance(float u, float v, float ax, float ay, float bx, float by) noexcept {
    const float px = u - ax;
    const float py = v - ay;
    const float dx = bx - ax;
    const float dy = by - ay;
    const float t = std::clamp((px * dx + py * dy) / (dx * dx + dy * dy), 0.0f, 1.0f);
    const float ex = px - t * dx;
    const float ey = py - t * dy;
    return std::sqrt(ex * ex + ey * ey);
}

float mouth_line(const FaceGeometry& g, float u) noexcept {
    const float s = u / g.mouth_half;
    return g.mouth_y + g.mouth_curve * (0.5f - s * s) - g.mouth_asym * s;
}

const std::array<double, kWindow>& gaussian_taps() {
    static const std::array<double, kWindow> taps = [] {
        std::array<double, kWindow> t{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += t[i];
        }
        for (auto& x : t) {
            x /= sum;
        }
        return t;
    }();
    return taps;
}

void check_ssim_inputs(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("ssim: image shapes differ");
    }
    if (a.height < kWindow || a.width < kWindow) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
}

double ssim_from_moments(double mu_a, double mu_b, double saa, double sbb, double sab) {
    const double va = saa - mu_a * mu_a;
    const double vb = sbb - mu_b * mu_b;
    const double cov = sab - mu_a * mu_b;
    return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
           ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
}

inline double unit(float p) { return (static_cast<double>(p) + 1.0) * 0.5; }

}  // namespace

float shade(const FaceGeometry& g, float u, float v, int channel, float pixel_size) noexcept {
    float value = g.background;
    const float head = coverage(ellipse_sd(u, v, 0.0f, 0.0f, g.head_rx, g.head_ry), pixel_size);
    float skin = g.skin;
    if (channel == 0) {
        skin += g.tint_r;
    } else if (channel == 2) {
        skin += g.tint_b;
    }
    value += head * (skin - value);

    float ink = 0.0f;
    for (float side : {-1.0f, 1.0f}) {
        const float cx = side * g.eye_dx;
        ink = std::max(ink, coverage(ellipse_sd(u, v, cx, g.eye_y, g.eye_rx, g.eye_ry), pixel_size));

        // inner end sits toward the face midline
        const float inner_x = cx - side * g.brow_half;
        const float outer_x = cx + side * g.brow_half;
        const float inner_y = g.brow_y - g.brow_slope * g.brow_half;
        const float outer_y = g.brow_y + g.brow_slope * g.brow_half;
        const float d = segment_distance(u, v, inner_x, inner_y, outer_x, outer_y) - g.brow_thickness;
        ink = std::max(ink, coverage(d, pixel_size));
    }

    if (std::abs(u) <= g.mouth_half + g.mouth_thickness) {
        const float uc = std::clamp(u, -g.mouth_half, g.mouth_half);
        const float upper = mouth_line(g, uc);
        const float lower = upper + g.mouth_open;
        float d;
        if (v < upper) {
            d = upper - v;
        } else if (v > lower) {
            d = v - lower;
        } else {
            d = 0.0f;
        }
        d = std::hypot(d, u - uc) - g.mouth_thickness;
        ink = std::max(ink, coverage(d, pixel_size));
    }

    value += ink * head * (g.ink - value);
    return std::clamp(value, -1.0f, 1.0f);
}

void render_serial(const FaceGeometry& g, Image& out) {
    const float pixel = 2.0f / static_cast<float>(out.width);
    for (int c = 0; c < out.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            const float v = (static_cast<float>(y) + 0.5f) * 2.0f / static_cast<float>(out.height) - 1.0f;
            for (int x = 0; x < out.width; ++x) {
                const float u = (static_cast<float>(x) + 0.5f) * 2.0f / static_cast<float>(out.width) - 1.0f;
                out.at(c, y, x) = shade(g, u, v, c, pixel);
            }
        }
    }
}

void render_parallel(const FaceGeometry& g, Image& out) {
    const float pixel = 2.0f / static_cast<float>(out.width);
    const int rows = out.channels * out.height;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int c = row / out.height;
        const int y = row % out.height;
        const float v = (static_cast<float>(y) + 0.5f) * 2.0f / static_cast<float>(out.height) - 1.0f;
        for (int x = 0; x < out.width; ++x) {
            const float u = (static_cast<float>(x) + 0.5f) * 2.0f / static_cast<float>(out.width) - 1.0f;
            out.at(c, y, x) = shade(g, u, v, c, pixel);
        }
    }
}

double ssim_serial(const Image& a, const Image& b) {
    check_ssim_inputs(a, b);
    const auto& taps = gaussian_taps();
    const int oh = a.height - kWindow + 1;
    const int ow = a.width - kWindow + 1;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < kWindow; ++i) {
                    for (int j = 0; j < kWindow; ++j) {
                        const double w = taps[i] * taps[j];
                        const double pa = unit(a.at(c, y + i, x + j));
                        const double pb = unit(b.at(c, y + i, x + j));
                        ma += w * pa;
                        mb += w * pb;
                        saa += w * pa * pa;
                        sbb += w * pb * pb;
                        sab += w * pa * pb;
                    }
                }
                total += ssim_from_moments(ma, mb, saa, sbb, sab);
            }
        }
    }
    return total / (static_cast<double>(a.channels) * oh * ow);
}

double ssim_parallel(const Image& a, const Image& b) {
    check_ssim_inputs(a, b);
    const auto& taps = gaussian_taps();
    const int h = a.height;
    const int w = a.width;
    const int oh = h - kWindow + 1;
    const int ow = w - kWindow + 1;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        // horizontal pass: five moment planes of size h x ow
        std::vector<std::array<double, 5>> horiz(static_cast<std::size_t>(h) * ow);
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> m{};
                for (int j = 0; j < kWindow; ++j) {
                    const double pa = unit(a.at(c, y, x + j));
                    const double pb = unit(b.at(c, y, x + j));
                    const double t = taps[j];
                    m[0] += t * pa;
                    m[1] += t * pb;
                    m[2] += t * pa * pa;
                    m[3] += t * pb * pb;
                    m[4] += t * pa * pb;
                }
                horiz[static_cast<std::size_t>(y) * ow + x] = m;
            }
        }
        double channel_sum = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : channel_sum)
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::array<double, 5> m{};
                for (int i = 0; i < kWindow; ++i) {
                    const auto& row = horiz[static_cast<std::size_t>(y + i) * ow + x];
                    for (int k = 0; k < 5; ++k) {
                        m[k] += taps[i] * row[k];
                    }
                }
                channel_sum += ssim_from_moments(m[0], m[1], m[2], m[3], m[4]);
            }
        }
        total += channel_sum;
    }
    return total / (static_cast<double>(a.channels) * oh * ow);
}

}  // namespace fesr::kernels
