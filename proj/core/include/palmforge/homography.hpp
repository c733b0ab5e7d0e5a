#pragma once

#include <array>
#include <cmath>

#include "palmforge/errors.hpp"

namespace palmforge {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// 3x3 projective transform mapping source coordinates to destination
// coordinates. Stored row-major, normalized so m[8] == 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return Homography{}; }

    static Homography translation(double tx, double ty) {
        Homography h;
        h.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
        return h;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    // Scales so the bottom-right element is 1.
    Homography normalized() const {
        if (std::abs(m[8]) < 1e-300) throw InvalidArgument("homography: cannot normalize, m[2][2] == 0");
        Homography out;
        for (int i = 0; i < 9; ++i) out.m[i] = m[i] / m[8];
        out.m[8] = 1.0;
        return out;
    }

    Homography inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-12) throw InvalidArgument("homography: singular matrix");
        Homography inv;
        inv.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
        inv.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
        inv.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
        inv.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
        inv.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
        inv.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
        inv.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
        inv.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
        inv.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
        return inv;
    }

    Vec2 apply(const Vec2& p) const {
        const double w = m[6] * p.x + m[7] * p.y + m[8];
        return {(m[0] * p.x + m[1] * p.y + m[2]) / w,
                (m[3] * p.x + m[4] * p.y + m[5]) / w};
    }

    // this ∘ other: applies `other` first.
    Homography compose(const Homography& other) const {
        Homography out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[r * 3 + k] * other.m[k * 3 + c];
                out.m[r * 3 + c] = s;
            }
        return out;
    }
};

}  // namespace palmforge
