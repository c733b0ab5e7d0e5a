#pragma once

#include <filesystem>

#include "palmforge/image.hpp"

namespace palmforge::img {

// 8-bit grayscale PNG; values mapped [0,1] <-> [0,255] linearly.
// Multi-channel input is rejected unless allow_luminance_reduction is set,
// in which case Rec.601 luma is taken.
Image load_png(const std::filesystem::path& path, bool allow_luminance_reduction = false);
void save_png(const std::filesystem::path& path, const Image& img);

// Line maps as 1-bit grayscale PNG, foreground = white.
BinaryImage load_png_binary(const std::filesystem::path& path);
void save_png_binary(const std::filesystem::path& path, const BinaryImage& img);

// Plain PGM (P5), 8-bit.
Image load_pgm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const Image& img);

}  // namespace palmforge::img
