#pragma once

#include <string>

#include "svio/vision/image.hpp"

namespace svio {

// 8-bit grayscale PGM (binary P5) and, when built with libpng, grayscale PNG.
Image load_image(const std::string& path);
void save_pgm(const Image& img, const std::string& path);

bool png_supported();

}  // namespace svio
