#include "palmforge/crease.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "palmforge/rng.hpp"

namespace palmforge::crease {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Vec2 lerp(const Vec2& a, const Vec2& b, double t) {
    return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
}

double dist(const Vec2& a, const Vec2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    if (len2 <= 0.0) return dist(p, a);
    double t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return dist(p, {a.x + t * vx, a.y + t * vy});
}

bool flat_enough(const std::array<Vec2, 4>& c, double tol) {
    return point_segment_distance(c[1], c[0], c[3]) <= tol &&
           point_segment_distance(c[2], c[0], c[3]) <= tol;
}

void subdivide(const std::array<Vec2, 4>& c, std::array<Vec2, 4>& l, std::array<Vec2, 4>& r) {
    const Vec2 ab = lerp(c[0], c[1], 0.5);
    const Vec2 bc = lerp(c[1], c[2], 0.5);
    const Vec2 cd = lerp(c[2], c[3], 0.5);
    const Vec2 abbc = lerp(ab, bc, 0.5);
    const Vec2 bccd = lerp(bc, cd, 0.5);
    const Vec2 mid = lerp(abbc, bccd, 0.5);
    l = {c[0], ab, abbc, mid};
    r = {mid, bccd, cd, c[3]};
}

void flatten_rec(const std::array<Vec2, 4>& c, double tol, int depth, std::vector<Vec2>& out) {
    if (depth >= 16 || flat_enough(c, tol)) {
        out.push_back(c[3]);
        return;
    }
    std::array<Vec2, 4> l, r;
    subdivide(c, l, r);
    flatten_rec(l, tol, depth + 1, out);
    flatten_rec(r, tol, depth + 1, out);
}

// Adaptive de-Casteljau flattening in pixel coordinates, tolerance 0.25 px.
std::vector<Vec2> flatten_curve_px(const BezierCurve& c, int width, int height) {
    std::array<Vec2, 4> px;
    for (int i = 0; i < 4; ++i)
        px[i] = {c.control_points[i].x * (width - 1), c.control_points[i].y * (height - 1)};
    std::vector<Vec2> poly;
    poly.push_back(px[0]);
    flatten_rec(px, 0.25, 0, poly);
    return poly;
}

// Min distance from every pixel to the curve's polyline, +inf where farther
// than `reach`.
std::vector<double> distance_field(const BezierCurve& c, int width, int height, double reach) {
    std::vector<double> d(static_cast<std::size_t>(width) * height,
                          std::numeric_limits<double>::infinity());
    const auto poly = flatten_curve_px(c, width, height);
    for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
        const Vec2& a = poly[s];
        const Vec2& b = poly[s + 1];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dd = point_segment_distance(
                    {static_cast<double>(x), static_cast<double>(y)}, a, b);
                auto& cell = d[static_cast<std::size_t>(y) * width + x];
                if (dd < cell) cell = dd;
            }
    }
    return d;
}

Vec2 clamp_unit(const Vec2& p) { return {clamp01(p.x), clamp01(p.y)}; }

BezierCurve make_curve(Rng& rng, const Vec2& p0, const Vec2& p3, double bend,
                       double width_lo, double width_hi, double int_lo, double int_hi) {
    const double nx = -(p3.y - p0.y), ny = p3.x - p0.x;
    const double nl = std::hypot(nx, ny);
    const double ux = nl > 0 ? nx / nl : 0.0, uy = nl > 0 ? ny / nl : 0.0;
    const double o1 = rng.uniform(-bend, bend);
    const double o2 = rng.uniform(-bend, bend);
    BezierCurve c;
    c.control_points[0] = p0;
    c.control_points[1] = clamp_unit({lerp(p0, p3, 1.0 / 3.0).x + ux * o1,
                                      lerp(p0, p3, 1.0 / 3.0).y + uy * o1});
    c.control_points[2] = clamp_unit({lerp(p0, p3, 2.0 / 3.0).x + ux * o2,
                                      lerp(p0, p3, 2.0 / 3.0).y + uy * o2});
    c.control_points[3] = p3;
    c.stroke_width = rng.uniform(width_lo, width_hi);
    c.intensity = rng.uniform(int_lo, int_hi);
    return c;
}

}  // namespace

void CreaseConfig::validate() const {
    if (principal_min < 1 || principal_min > principal_max)
        throw InvalidArgument("crease config: bad principal count range");
    if (minor_min < 0 || minor_min > minor_max)
        throw InvalidArgument("crease config: bad minor count range");
    if (principal_width_min <= 0 || principal_width_min > principal_width_max)
        throw InvalidArgument("crease config: bad principal width range");
    if (principal_min_span <= 0 || principal_min_span >= 1)
        throw InvalidArgument("crease config: principal span must be in (0,1)");
    if (principal_intensity_min <= 0 || principal_intensity_max > 1 ||
        principal_intensity_min > principal_intensity_max)
        throw InvalidArgument("crease config: bad intensity range");
}

void TextureConfig::validate() const {
    if (amplitude < 0 || amplitude > 0.6)
        throw InvalidArgument("texture config: amplitude must be in [0, 0.6]");
    if (grid < 1) throw InvalidArgument("texture config: grid must be >= 1");
}

IdentitySpec sample_identity(std::uint64_t rng_seed, const CreaseConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(rng_seed, 0x1D));

    const double minor_w_lo = cfg.minor_width_min > 0 ? cfg.minor_width_min : 0.8;
    const double minor_w_hi = cfg.minor_width_max > 0 ? cfg.minor_width_max : 1.5;

    IdentitySpec spec;
    spec.seed = rng_seed;

    const int n_principal = rng.uniform_int(cfg.principal_min, cfg.principal_max);
    const double min_chord = cfg.principal_min_span * kSqrt2;
    for (int i = 0; i < n_principal; ++i) {
        Vec2 p0, p3;
        do {
            p0 = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
            p3 = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        } while (dist(p0, p3) < min_chord);
        spec.curves.push_back(make_curve(rng, p0, p3, 0.18,
                                         cfg.principal_width_min, cfg.principal_width_max,
                                         cfg.principal_intensity_min, cfg.principal_intensity_max));
    }

    const int n_minor = rng.uniform_int(cfg.minor_min, cfg.minor_max);
    for (int i = 0; i < n_minor; ++i) {
        const Vec2 p0{rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98)};
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double len = rng.uniform(0.12, 0.4);
        const Vec2 p3 = clamp_unit({p0.x + len * std::cos(ang), p0.y + len * std::sin(ang)});
        spec.curves.push_back(make_curve(rng, p0, p3, 0.1, minor_w_lo, minor_w_hi, 0.25, 0.55));
    }
    return spec;
}

img::Image render_creases(const IdentitySpec& spec, int width, int height) {
    if (width < 32 || height < 32)
        throw InvalidArgument("render_creases: dimensions must be >= 32");
    img::Image out(width, height, 1.0f);
    for (const auto& c : spec.curves) {
        const double reach = c.stroke_width / 2.0 + 1.5;
        const auto d = distance_field(c, width, height, reach);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!std::isfinite(d[i])) continue;
            // soft stamp with 1 px falloff past the half-width
            const double cov = std::clamp(c.stroke_width / 2.0 + 0.5 - d[i], 0.0, 1.0);
            const float v = static_cast<float>(1.0 - c.intensity * cov);
            if (v < out.pixels[i]) out.pixels[i] = v;
        }
    }
    return out;
}

img::BinaryImage stroke_mask(const IdentitySpec& spec, int width, int height) {
    img::BinaryImage mask(width, height);
    for (const auto& c : spec.curves) {
        const double half = c.stroke_width / 2.0;
        const auto d = distance_field(c, width, height, half + 1.0);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d[i] <= half) mask.bits[i] = 1;
    }
    return mask;
}

img::Image composite_texture(const img::Image& creases, std::uint64_t rng_seed,
                             const TextureConfig& cfg) {
    cfg.validate();
    if (cfg.amplitude == 0.0) return creases;

    Rng rng(derive_seed(rng_seed, 0x7E));
    const int g = cfg.grid;
    std::vector<double> node(static_cast<std::size_t>(g + 1) * (g + 1));
    for (auto& v : node) v = rng.uniform();

    img::Image out(creases.width, creases.height);
    for (int y = 0; y < creases.height; ++y) {
        const double fy = static_cast<double>(y) / (creases.height - 1) * g;
        const int cy = std::min(static_cast<int>(fy), g - 1);
        double ty = fy - cy;
        ty = ty * ty * (3.0 - 2.0 * ty);
        for (int x = 0; x < creases.width; ++x) {
            const double fx = static_cast<double>(x) / (creases.width - 1) * g;
            const int cx = std::min(static_cast<int>(fx), g - 1);
            double tx = fx - cx;
            tx = tx * tx * (3.0 - 2.0 * tx);
            const double n00 = node[static_cast<std::size_t>(cy) * (g + 1) + cx];
            const double n10 = node[static_cast<std::size_t>(cy) * (g + 1) + cx + 1];
            const double n01 = node[static_cast<std::size_t>(cy + 1) * (g + 1) + cx];
            const double n11 = node[static_cast<std::size_t>(cy + 1) * (g + 1) + cx + 1];
            const double field = (1 - ty) * ((1 - tx) * n00 + tx * n10) +
                                 ty * ((1 - tx) * n01 + tx * n11);
            const double bg = 1.0 - cfg.amplitude * field;
            out.at(x, y) = static_cast<float>(creases.at(x, y) * bg);
        }
    }
    return out;
}

Vec2 bezier_point(const BezierCurve& c, double t) {
    const double u = 1.0 - t;
    const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
    const auto& p = c.control_points;
    return {b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x,
            b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y};
}

void to_json(nlohmann::json& j, const BezierCurve& c) {
    nlohmann::json cp = nlohmann::json::array();
    for (const auto& p : c.control_points) cp.push_back({p.x, p.y});
    j = {{"cp", cp}, {"width", c.stroke_width}, {"intensity", c.intensity}};
}

void from_json(const nlohmann::json& j, BezierCurve& c) {
    const auto& cp = j.at("cp");
    if (cp.size() != 4) throw InvalidArgument("bezier curve needs exactly 4 control points");
    for (int i = 0; i < 4; ++i)
        c.control_points[i] = {cp[i][0].get<double>(), cp[i][1].get<double>()};
    c.stroke_width = j.at("width").get<double>();
    c.intensity = j.at("intensity").get<double>();
}

void to_json(nlohmann::json& j, const IdentitySpec& s) {
    j = {{"id", s.id}, {"seed", s.seed}, {"curves", s.curves}};
}

void from_json(const nlohmann::json& j, IdentitySpec& s) {
    s.id = j.at("id").get<std::int64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.curves = j.at("curves").get<std::vector<BezierCurve>>();
}

void save_identity_corpus(const std::filesystem::path& path, const std::vector<IdentitySpec>& ids) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write identity corpus: " + path.string());
    out << nlohmann::json(ids).dump(1) << "\n";
}

std::vector<IdentitySpec> load_identity_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read identity corpus: " + path.string());
    nlohmann::json j;
    in >> j;
    return j.get<std::vector<IdentitySpec>>();
}

}  // namespace palmforge::crease
