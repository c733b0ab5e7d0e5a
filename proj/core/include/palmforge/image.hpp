#pragma once

#include <cstdint>
#include <vector>

#include "palmforge/errors.hpp"
#include "palmforge/homography.hpp"

namespace palmforge::img {

// Single-channel raster, row-major, nominal range [0,1]. Diffusion
// intermediates may leave that range; values must stay finite.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h, float fill = 0.0f);

    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

// 1 = crease/foreground.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return bits.size(); }
    std::size_t count() const;
};

struct StructuringElement {
    enum class Shape { square, cross };
    int radius = 1;
    Shape shape = Shape::square;
};

// Separable Gaussian convolution, kernel normalized to sum 1, edge
// replication at the borders. Accumulation order is fixed so results are
// bit-identical across runs.
Image gaussian_blur(const Image& img, int kernel_size, double sigma);

// pixel -> 1 iff value < local mean over window x window (edge replicated)
// minus offset_c. Dark lines on light background.
BinaryImage adaptive_threshold(const Image& img, int window, double offset_c);

// Dilation then erosion with the same element; outside the frame counts as 0
// for both passes.
BinaryImage morph_close(const BinaryImage& img, const StructuringElement& se);

// Erosion then dilation; same border policy.
BinaryImage morph_open(const BinaryImage& img, const StructuringElement& se);

BinaryImage dilate(const BinaryImage& img, const StructuringElement& se);
BinaryImage erode(const BinaryImage& img, const StructuringElement& se);

// Inverse-mapping warp with bilinear interpolation; samples outside the
// source take `fill`. The homography maps source -> destination coordinates
// (pixel centers at integers).
Image warp_perspective(const Image& img, const Homography& h, float fill);

// Nearest-neighbor warp for masks; out-of-bounds -> 0.
BinaryImage warp_binary(const BinaryImage& img, const Homography& h);

double intersection_over_union(const BinaryImage& a, const BinaryImage& b);

}  // namespace palmforge::img
