#pragma once

#include "fesr/datamodel.hpp"

#include <filesystem>
#include <vector>

namespace fesr {

/// 8-bit grayscale (c = 1) or RGB (c = 3) PNG.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Tiles equally shaped images row-major into one PNG with a 2-pixel dark gutter.
void write_grid_png(const std::filesystem::path& path, const std::vector<Image>& tiles, int columns);

}  // namespace fesr
