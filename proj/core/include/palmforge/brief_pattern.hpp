#pragma once

#include <array>
#include <cstdint>

namespace palmforge::geom {

// Fixed BRIEF sampling pattern: 256 point pairs (ax, ay, bx, by) inside a
// radius-8 disc, drawn once from Gaussian(0, 3.3) with pattern seed
// 0x9E3779B9 and committed here so descriptors stay compatible across
// builds. Regenerating with a different seed breaks every stored descriptor.
inline constexpr int kBriefPatchRadius = 8;
inline constexpr std::array<std::int8_t, 1024> kBriefPattern = {
    -2, 2, 4, 3, -3, -6, -5, 2, -1, 4, 0, -1, 1, -4, 4, 4,
    -1, -5, -1, 2, -3, -5, 3, 3, 0, -2, 6, 4, -4, -4, -3, 5,
    -1, 3, -2, 3, 2, 5, 3, 2, -2, 0, -2, -5, -1, 0, 4, -2,
    -1, -4, 2, -6, 2, -1, 2, 1, -2, 0, 4, 1, -2, -2, -4, -1,
    7, -2, 1, 1, 3, -4, -2, -1, -1, -2, -4, 0, 0, 4, -1, -1,
    -1, -3, -4, -2, -1, 2, 2, -5, 2, -2, 4, 1, 3, 0, 3, -2,
    -3, -3, 2, -4, 2, -4, 1, 0, -4, 0, -3, -1, -2, -1, -3, 2,
    -1, 0, 1, 2, 0, 2, 0, 4, 0, 1, 1, -1, 0, 3, 2, -5,
    2, -3, 0, 1, 3, -5, -3, -3, 4, 3, -2, -2, 1, -7, -1, 1,
    -1, 1, -1, -5, 3, 2, 0, 4, 0, -3, -6, 3, -2, 3, 1, -1,
    -5, -2, 3, 0, 2, -1, -2, -1, 0, -2, -6, -3, 2, -1, -4, -3,
    0, 4, 0, 3, -2, -2, -1, 2, -4, 1, 3, -2, 4, -3, 0, -1,
    -5, -4, -2, 2, 0, 0, -4, 0, 3, -7, 6, 0, -5, 0, 6, -2,
    4, -2, 0, -4, 4, -2, -3, -2, 4, 4, -4, -1, 0, 4, 6, -1,
    4, -3, 3, -4, -2, 6, 1, 3, 3, -3, -4, -3, -1, -2, -2, -7,
    -2, 1, 3, 4, -5, 1, 2, 3, 2, -2, -1, -4, -2, -1, -2, 5,
    -3, 3, 2, -2, 3, -4, -4, 1, 0, 8, -3, -4, 1, 3, 4, 2,
    2, -4, -3, -2, 2, -4, 0, 5, 5, -6, 3, 0, -1, -2, 1, -1,
    -4, -2, -3, 1, 0, 0, 5, 3, 4, 1, 3, 2, 6, -1, -2, 6,
    -7, 1, -1, -4, -2, 1, -3, 4, 2, -1, 3, -5, -1, -4, -6, -2,
    -6, 4, -2, -5, -4, 0, -3, 1, 6, -1, -4, 1, 0, 2, 0, -1,
    4, -5, 2, -6, -5, 5, 0, 4, -2, -7, -4, -5, -2, 1, -2, -1,
    0, -3, -2, 0, 1, -3, -1, 3, 1, 1, 3, -4, 0, 4, 4, -1,
    2, -3, -1, 7, 1, -6, -1, 0, -5, 1, 2, -7, 2, 7, -2, -4,
    -1, -2, 0, 3, -3, -2, 2, 1, -4, -1, 2, 1, 4, -1, 0, -7,
    1, -1, 2, 3, 1, 0, -3, 0, 0, 1, -1, -3, -1, 3, -3, 2,
    3, -6, 3, 4, -5, 1, -1, 3, 0, 4, -1, 6, -4, -2, -7, -1,
    6, 0, -6, -2, -5, -2, 0, -8, 1, -6, 0, -7, 5, -1, -4, 5,
    0, 1, -5, 2, 2, -2, -6, 5, 7, 2, 4, -3, 6, 5, 2, -3,
    -4, 6, -1, 2, -1, 1, 6, -1, 2, 2, 2, 3, 5, -4, 3, -3,
    4, 1, -3, -2, -2, 0, -3, -1, -4, 1, -1, -2, 1, -1, -1, 0,
    -4, 0, 0, -1, 2, 3, 3, 0, -3, 2, 1, -4, 6, 3, 0, 2,
    2, 0, 0, -3, 4, 0, -1, 0, 0, -1, -1, -3, 0, -2, 1, -2,
    -7, 0, 5, -2, -1, -1, 3, 1, 4, -3, -2, 7, 4, -6, 2, 2,
    -3, 5, 0, 2, 0, -2, -3, -4, -3, 6, -1, -2, -1, 0, -2, -1,
    -5, 2, -1, 0, -1, -2, 0, 2, -2, 6, 2, 0, -1, -3, 6, -4,
    4, 5, 1, 4, 4, 0, -2, -1, -4, 0, 2, -3, -3, -2, -1, -3,
    5, 2, -2, -6, 4, -1, 2, 3, -1, -2, -2, -1, 3, 3, 1, 4,
    1, 2, -2, -3, 0, -3, 0, -6, 0, -1, 2, -2, 0, 1, 1, -3,
    -2, -1, -7, -2, 2, 5, 1, 1, 3, 1, 1, -5, -4, 4, 8, 0,
    -4, -3, 1, -1, 1, 4, -4, -5, 1, -2, -4, 3, 2, 0, 2, 1,
    1, 4, -4, -4, 1, 7, -2, -7, 1, 4, 0, 2, 0, -1, 5, 1,
    3, 6, 0, -4, -2, 0, 1, 1, -1, 2, 1, 1, 0, 4, -1, 7,
    5, -4, -3, -7, 3, 0, -3, 0, 4, -4, -2, 2, 2, -3, -2, 3,
    0, 1, 1, 0, 4, -1, 3, 2, 1, -2, -4, 0, -3, -1, 0, 0,
    0, -4, 5, -5, 4, 5, 4, -4, 0, 3, 4, 1, -2, -4, -7, -2,
    3, -1, -2, 1, 2, 0, 1, 1, 2, 0, 0, 0, -1, 0, -1, 6,
    4, 3, 7, -3, 4, -1, -2, -1, -4, 5, -2, -4, -1, 4, -3, -2,
    0, 1, -6, -5, 0, 3, -6, -1, -1, -3, -2, 4, 2, 2, -2, -2,
    0, 2, -5, 1, 2, 2, 4, 1, -1, 0, 4, 1, -4, -1, -2, 1,
    2, -1, 0, 3, -6, -1, 3, -2, 1, -1, 1, 2, 3, -1, -7, -1,
    1, -1, 2, -4, 3, -3, 2, 0, -2, 6, 2, 3, -2, -2, 2, 0,
    -4, -2, -2, -3, -2, -2, -3, 0, -2, 0, 0, -6, -2, -5, 5, 2,
    -8, 0, 1, -4, -3, -2, 2, 2, -1, 2, 5, -2, -3, 0, 4, 6,
    2, -2, -3, -1, -5, -4, -3, -2, -1, 2, -2, 4, 1, -2, 0, -4,
    -2, 2, 0, -3, 2, -1, -1, 4, -2, -2, 0, -4, 5, 0, -2, 4,
    -4, 0, 2, -2, -3, 1, 4, -4, 2, 0, 6, -2, 0, 4, -2, 4,
    -2, 0, 3, -1, 3, -2, -3, -3, 3, 4, 0, -8, 3, -3, 2, 2,
    -2, -2, 4, 1, 0, -3, 1, 6, 6, -3, -2, -1, -1, 2, 4, 5,
    -1, 1, -1, 4, -1, 0, 1, 4, -1, 0, -2, 4, 3, 0, -1, 0,
    4, 1, 2, -2, 0, 4, -1, -3, -4, 2, 0, 3, -3, 1, 4, 0,
    2, 1, -1, -1, 3, -1, 2, 1, 4, -3, 6, 3, -4, 3, -1, -2,
    0, 3, -1, 4, -5, -1, -4, 3, 3, -2, 2, 1, 2, 2, 0, 1,
    4, -1, 1, -3, 2, 6, 2, 3, 1, -2, 1, 1, 1, -2, 4, -5,
};

}  // namespace palmforge::geom
