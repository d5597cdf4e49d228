#include "fesr/image_io.hpp"

#include <png.h>

#include <cstring>

namespace fesr {

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw DataError("write_png: unsupported channel count " + std::to_string(image.channels));
    }
    const auto planar = to_bytes(image);
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    std::vector<std::uint8_t> interleaved(planar.size());
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < image.channels; ++c) {
            interleaved[p * image.channels + c] = planar[c * plane + p];
        }
    }

    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, interleaved.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot write " + path.string() + ": " + msg);
    }
}

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw DataError("cannot read " + path.string() + ": " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    std::vector<std::uint8_t> interleaved(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, interleaved.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode " + path.string() + ": " + msg);
    }
    const int h = static_cast<int>(png.height);
    const int w = static_cast<int>(png.width);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> planar(interleaved.size());
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < channels; ++c) {
            planar[c * plane + p] = interleaved[p * channels + c];
        }
    }
    return rescale_to_unit(std::span<const std::uint8_t>(planar), channels, h, w);
}

void write_grid_png(const std::filesystem::path& path, const std::vector<Image>& tiles, int columns) {
    if (tiles.empty() || columns < 1) {
        throw DataError("write_grid_png: nothing to write");
    }
    const auto& first = tiles.front();
    constexpr int gutter = 2;
    const int cols = std::min<int>(columns, static_cast<int>(tiles.size()));
    const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
    Image grid(first.channels, rows * (first.height + gutter) + gutter, cols * (first.width + gutter) + gutter, -1.0f);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        if (!tiles[t].same_shape(first)) {
            throw DataError("write_grid_png: tiles differ in shape");
        }
        const int oy = gutter + static_cast<int>(t) / cols * (first.height + gutter);
        const int ox = gutter + static_cast<int>(t) % cols * (first.width + gutter);
        for (int c = 0; c < first.channels; ++c) {
            for (int y = 0; y < first.height; ++y) {
                for (int x = 0; x < first.width; ++x) {
                    grid.at(c, oy + y, ox + x) = tiles[t].at(c, y, x);
                }
            }
        }
    }
    write_png(path, grid);
}

}  // namespace fesr
