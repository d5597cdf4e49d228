#pragma once

// Data-parallel pixel kernels. Each kernel has an OpenMP implementation used by the
// library and a plain serial reference kept for tests and the benchmark.

#include "fesr/datamodel.hpp"

namespace fesr::kernels {

/// Fully resolved cartoon-face geometry in normalized coordinates ([-1, 1], y down).
struct FaceGeometry {
    float head_rx = 0.7f;
    float head_ry = 0.86f;
    float skin = 0.4f;          // head fill value
    float background = -0.85f;
    float ink = -0.9f;          // eyes, brows, mouth
    float eye_dx = 0.32f;
    float eye_y = -0.12f;
    float eye_rx = 0.1f;
    float eye_ry = 0.06f;
    float brow_y = -0.36f;
    float brow_half = 0.13f;
    float brow_slope = 0.0f;    // positive raises the inner ends
    float brow_thickness = 0.035f;
    float mouth_y = 0.42f;
    float mouth_half = 0.26f;
    float mouth_curve = 0.0f;   // positive lifts the corners
    float mouth_asym = 0.0f;
    float mouth_open = 0.0f;
    float mouth_thickness = 0.035f;
    float tint_r = 0.0f;        // per-channel offsets for RGB renders
    float tint_b = 0.0f;
};

/// Value of one pixel; u, v are the normalized pixel-center coordinates.
float shade(const FaceGeometry& g, float u, float v, int channel, float pixel_size) noexcept;

void render_serial(const FaceGeometry& g, Image& out);
void render_parallel(const FaceGeometry& g, Image& out);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), computed on [0, 1]-mapped pixels.
/// The serial version evaluates each window directly; the parallel version filters separably.
double ssim_serial(const Image& a, const Image& b);
double ssim_parallel(const Image& a, const Image& b);

}  // namespace fesr::kernels
