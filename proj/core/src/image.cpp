#include "palmforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace palmforge::img {

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

void require_finite(const Image& im, const char* op) {
    for (float v : im.pixels) {
        if (!std::isfinite(v)) throw NumericalFailure(std::string(op) + ": non-finite pixel value");
    }
}

// Offsets covered by a structuring element.
std::vector<std::pair<int, int>> se_offsets(const StructuringElement& se) {
    if (se.radius < 1) throw InvalidArgument("structuring element radius must be >= 1");
    std::vector<std::pair<int, int>> out;
    for (int dy = -se.radius; dy <= se.radius; ++dy)
        for (int dx = -se.radius; dx <= se.radius; ++dx) {
            if (se.shape == StructuringElement::Shape::cross && dx != 0 && dy != 0) continue;
            out.emplace_back(dx, dy);
        }
    return out;
}

}  // namespace

Image::Image(int w, int h, float fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw InvalidArgument("image dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

BinaryImage::BinaryImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw InvalidArgument("image dimensions must be positive");
    bits.assign(static_cast<std::size_t>(w) * h, fill);
}

std::size_t BinaryImage::count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

Image gaussian_blur(const Image& img, int kernel_size, double sigma) {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw InvalidArgument("gaussian_blur: kernel_size must be odd and >= 3");
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw InvalidArgument("gaussian_blur: sigma must be finite and > 0");
    if (img.width < kernel_size || img.height < kernel_size)
        throw InvalidArgument("gaussian_blur: image smaller than kernel");

    const int r = kernel_size / 2;
    std::vector<double> k(kernel_size);
    double ksum = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        const double d = i - r;
        k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        ksum += k[i];
    }
    for (double& v : k) v /= ksum;

    const int w = img.width, h = img.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    // horizontal pass
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += k[i + r] * img.at(clampi(x + i, 0, w - 1), y);
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    // vertical pass
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += k[i + r] * tmp[static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x];
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    require_finite(out, "gaussian_blur");
    return out;
}

BinaryImage adaptive_threshold(const Image& img, int window, double offset_c) {
    if (window < 3 || window % 2 == 0)
        throw InvalidArgument("adaptive_threshold: window must be odd and >= 3");
    if (window > std::min(img.width, img.height))
        throw InvalidArgument("adaptive_threshold: window larger than image");

    const int r = window / 2;
    const int w = img.width, h = img.height;
    // separable box sums with edge replication
    std::vector<double> rowsum(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += img.at(clampi(x + i, 0, w - 1), y);
            rowsum[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    const double inv_area = 1.0 / (static_cast<double>(window) * window);
    BinaryImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += rowsum[static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x];
            const double mean = acc * inv_area;
            out.at(x, y) = img.at(x, y) < mean - offset_c ? 1 : 0;
        }
    }
    return out;
}

BinaryImage dilate(const BinaryImage& img, const StructuringElement& se) {
    const auto offs = se_offsets(se);
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t v = 0;
            for (const auto& [dx, dy] : offs) {
                const int sx = x + dx, sy = y + dy;
                if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
                if (img.at(sx, sy)) { v = 1; break; }
            }
            out.at(x, y) = v;
        }
    return out;
}

BinaryImage erode(const BinaryImage& img, const StructuringElement& se) {
    const auto offs = se_offsets(se);
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t v = 1;
            for (const auto& [dx, dy] : offs) {
                const int sx = x + dx, sy = y + dy;
                if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height || !img.at(sx, sy)) {
                    v = 0;
                    break;
                }
            }
            out.at(x, y) = v;
        }
    return out;
}

BinaryImage morph_close(const BinaryImage& img, const StructuringElement& se) {
    return erode(dilate(img, se), se);
}

BinaryImage morph_open(const BinaryImage& img, const StructuringElement& se) {
    return dilate(erode(img, se), se);
}

Image warp_perspective(const Image& img, const Homography& h, float fill) {
    if (std::abs(h.det()) <= 1e-12) throw InvalidArgument("warp_perspective: singular homography");
    const Homography inv = h.inverse();
    const int w = img.width, hgt = img.height;
    Image out(w, hgt);
    for (int y = 0; y < hgt; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (s.x < 0.0 || s.y < 0.0 || s.x > w - 1 || s.y > hgt - 1) {
                out.at(x, y) = fill;
                continue;
            }
            const int x0 = static_cast<int>(std::floor(s.x));
            const int y0 = static_cast<int>(std::floor(s.y));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, hgt - 1);
            const double fx = s.x - x0, fy = s.y - y0;
            const double v = (1.0 - fy) * ((1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0)) +
                             fy * ((1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1));
            out.at(x, y) = static_cast<float>(v);
        }
    }
    require_finite(out, "warp_perspective");
    return out;
}

BinaryImage warp_binary(const BinaryImage& img, const Homography& h) {
    if (std::abs(h.det()) <= 1e-12) throw InvalidArgument("warp_binary: singular homography");
    const Homography inv = h.inverse();
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Vec2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const int sx = static_cast<int>(std::lround(s.x));
            const int sy = static_cast<int>(std::lround(s.y));
            if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
            out.at(x, y) = img.at(sx, sy);
        }
    return out;
}

double intersection_over_union(const BinaryImage& a, const BinaryImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw InvalidArgument("iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace palmforge::img
