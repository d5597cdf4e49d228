#include "fesr/toyfaces.hpp"

#include "fesr/datasets.hpp"
#include "fesr/image_io.hpp"
#include "fesr/labelcodes.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

namespace fesr {

namespace {

struct ClassExtreme {
    const char* name;
    float curvature;
    float mouth_open;
    float mouth_asym;
    float brow_angle;
    float brow_raise;
    float eye_openness;
};

constexpr std::array<ClassExtreme, kMaxToyClasses> kClasses{{
    {"happy", 0.22f, 0.0f, 0.0f, 0.0f, 0.02f, -0.12f},
    {"sad", -0.18f, 0.0f, 0.0f, 0.45f, 0.0f, -0.10f},
    {"surprise", 0.0f, 0.12f, 0.0f, 0.0f, 0.10f, 0.45f},
    {"angry", -0.03f, 0.0f, 0.0f, -0.50f, -0.05f, -0.15f},
    {"disgust", -0.10f, 0.03f, 0.0f, -0.20f, 0.0f, -0.30f},
    {"fear", -0.06f, 0.05f, 0.0f, 0.30f, 0.08f, 0.30f},
    {"contempt", 0.04f, 0.0f, 0.10f, 0.0f, 0.0f, 0.0f},
}};

float draw(Rng& rng, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    return dist(rng);
}

void check_options(const ToyDatasetOptions& o) {
    if (o.identities < 1) {
        throw DataError("toy dataset needs at least one identity");
    }
    if (o.num_classes < 2 || o.num_classes > kMaxToyClasses) {
        throw DataError("toy dataset supports 2..7 classes");
    }
    if (o.intensities.empty()) {
        throw DataError("toy dataset needs at least one intensity");
    }
    for (float i : o.intensities) {
        if (!(i >= 0.0f && i <= 1.0f)) {
            throw DataError("toy intensities must lie in [0, 1]");
        }
    }
    if (!(o.noise >= 0.0f && o.noise <= 0.02f)) {
        throw DataError("toy noise amplitude must lie in [0, 0.02]");
    }
}

std::string image_name(int identity, int cls, std::size_t intensity_index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "id%04d_c%d_i%zu.png", identity, cls, intensity_index);
    return buf;
}

}  // namespace

ToyIdentity ToyIdentity::sample(std::uint64_t seed, std::uint64_t identity_index) {
    auto rng = make_rng(seed, 0x1d000000ull + identity_index);
    ToyIdentity id;
    id.face_aspect = draw(rng, 0.78f, 1.0f);
    id.eye_spacing = draw(rng, 0.26f, 0.38f);
    id.eye_size = draw(rng, 0.075f, 0.12f);
    id.brow_baseline = draw(rng, -0.42f, -0.32f);
    id.skin_tone = draw(rng, 0.05f, 0.65f);
    id.mouth_width = draw(rng, 0.2f, 0.32f);
    id.resting_curve = draw(rng, -0.06f, 0.06f);
    id.resting_brow = draw(rng, -0.12f, 0.12f);
    id.resting_eye = draw(rng, 0.5f, 0.75f);
    return id;
}

ToyExpressionSpec ToyExpressionSpec::for_class(int class_index, float intensity) {
    if (class_index < 0 || class_index >= kMaxToyClasses) {
        throw DataError("toy expression class out of range: " + std::to_string(class_index));
    }
    const auto& e = kClasses[static_cast<std::size_t>(class_index)];
    ToyExpressionSpec s;
    s.class_index = class_index;
    s.mouth_curvature = e.curvature;
    s.mouth_open = e.mouth_open;
    s.mouth_asym = e.mouth_asym;
    s.brow_angle = e.brow_angle;
    s.brow_raise = e.brow_raise;
    s.eye_openness = e.eye_openness;
    s.intensity = intensity;
    return s;
}

const char* toy_class_name(int class_index) {
    return class_index >= 0 && class_index < kMaxToyClasses ? kClasses[static_cast<std::size_t>(class_index)].name
                                                            : "unknown";
}

kernels::FaceGeometry face_geometry(const ToyIdentity& id, const ToyExpressionSpec& e) {
    const float k = e.intensity;
    kernels::FaceGeometry g;
    g.head_ry = 0.86f;
    g.head_rx = 0.86f * id.face_aspect;
    g.skin = id.skin_tone;
    g.tint_r = 0.15f * (id.skin_tone - 0.35f);
    g.tint_b = -0.1f;
    g.eye_dx = id.eye_spacing * id.face_aspect;
    g.eye_rx = id.eye_size;
    g.eye_ry = id.eye_size * std::clamp(id.resting_eye + k * e.eye_openness, 0.08f, 1.3f);
    g.brow_y = id.brow_baseline - k * e.brow_raise;
    g.brow_slope = id.resting_brow + k * e.brow_angle;
    g.mouth_half = id.mouth_width * id.face_aspect;
    g.mouth_curve = id.resting_curve + k * e.mouth_curvature;
    g.mouth_asym = k * e.mouth_asym;
    g.mouth_open = k * e.mouth_open;
    return g;
}

Image render(const ToyIdentity& identity, const ToyExpressionSpec& expr, int size, int channels) {
    if (size != 32 && size != 64 && size != 128) {
        throw DataError("toy render: unsupported size " + std::to_string(size) + " (use 32, 64 or 128)");
    }
    if (channels != 1 && channels != 3) {
        throw DataError("toy render: channels must be 1 or 3");
    }
    Image out(channels, size, size);
    kernels::render_parallel(face_geometry(identity, expr), out);
    return out;
}

std::string toy_subject_id(int identity_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "toy%04d", identity_index);
    return buf;
}

std::vector<Image> render_dataset_images(const ToyDatasetOptions& o) {
    check_options(o);
    const int per_identity = o.num_classes * static_cast<int>(o.intensities.size());
    std::vector<Image> images(static_cast<std::size_t>(o.identities) * per_identity);
#pragma omp parallel for schedule(dynamic)
    for (int id = 0; id < o.identities; ++id) {
        const auto identity = ToyIdentity::sample(o.seed, static_cast<std::uint64_t>(id));
        for (int cls = 0; cls < o.num_classes; ++cls) {
            for (std::size_t j = 0; j < o.intensities.size(); ++j) {
                const auto expr = ToyExpressionSpec::for_class(cls, o.intensities[j]);
                Image img(o.channels, o.size, o.size);
                kernels::render_serial(face_geometry(identity, expr), img);
                const std::size_t index = static_cast<std::size_t>(id) * per_identity +
                                          static_cast<std::size_t>(cls) * o.intensities.size() + j;
                auto rng = make_rng(o.seed ^ 0xa5a5a5a5ull, index);
                std::uniform_real_distribution<float> noise(-o.noise, o.noise);
                for (auto& p : img.pixels) {
                    p = std::clamp(p + noise(rng), -1.0f, 1.0f);
                }
                images[index] = std::move(img);
            }
        }
    }
    return images;
}

DatasetManifest generate_dataset(const ToyDatasetOptions& o, const std::filesystem::path& out_dir) {
    if (o.size != 32 && o.size != 64 && o.size != 128) {
        throw DataError("toy dataset: unsupported size " + std::to_string(o.size));
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) {
        throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }
    const auto images = render_dataset_images(o);

    DatasetManifest manifest;
    manifest.class_count = o.num_classes;
    manifest.image_size = o.size;
    manifest.channels = o.channels;
    manifest.root = out_dir;
    std::size_t index = 0;
    for (int id = 0; id < o.identities; ++id) {
        for (int cls = 0; cls < o.num_classes; ++cls) {
            for (std::size_t j = 0; j < o.intensities.size(); ++j) {
                ManifestEntry entry{"images/" + image_name(id, cls, j), toy_subject_id(id), cls};
                write_png(out_dir / entry.path, images[index++]);
                manifest.entries.push_back(std::move(entry));
            }
        }
    }
    save_manifest(manifest, out_dir / "manifest.tsv");
    return manifest;
}

}  // namespace fesr
