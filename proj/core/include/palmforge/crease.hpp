#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "palmforge/image.hpp"

namespace palmforge::crease {

// Cubic Bezier crease in normalized [0,1]^2 coordinates. intensity is the
// darkness of the stroke; stroke_width is in pixels at render time.
struct BezierCurve {
    std::array<Vec2, 4> control_points;
    double stroke_width = 1.0;  // >= 0.5 px
    double intensity = 0.5;     // (0, 1]
};

struct IdentitySpec {
    std::int64_t id = 0;
    std::vector<BezierCurve> curves;
    std::uint64_t seed = 0;
};

struct CreaseConfig {
    int principal_min = 2;
    int principal_max = 4;
    int minor_min = 3;
    int minor_max = 10;
    // principal chord length as a fraction of the unit-square diagonal
    double principal_min_span = 0.5;
    double principal_width_min = 1.6;
    double principal_width_max = 2.6;
    double principal_intensity_min = 0.55;
    double principal_intensity_max = 0.85;
    double minor_width_min = -1.0;  // negative = derived defaults below
    double minor_width_max = -1.0;

    void validate() const;
};

struct TextureConfig {
    double amplitude = 0.35;  // background dips to 1 - amplitude; must stay >= 0.4
    int grid = 6;             // coarse noise grid resolution

    void validate() const;
};

// Deterministic function of (seed, cfg): 2-4 principal creases spanning at
// least principal_min_span of the diagonal plus 3-10 minor creases, all
// control points inside the unit square.
IdentitySpec sample_identity(std::uint64_t rng_seed, const CreaseConfig& cfg);

// Light background (1.0), dark anti-aliased strokes, output in [0,1].
img::Image render_creases(const IdentitySpec& spec, int width, int height);

// Hard stroke support: pixels within stroke_width/2 of a curve. This is the
// oracle mask line-extraction fidelity is measured against.
img::BinaryImage stroke_mask(const IdentitySpec& spec, int width, int height);

// Multiplies the crease render into a smooth low-frequency background field.
// amplitude 0 returns the input unchanged.
img::Image composite_texture(const img::Image& creases, std::uint64_t rng_seed,
                             const TextureConfig& cfg);

// Evaluates the cubic at parameter t.
Vec2 bezier_point(const BezierCurve& c, double t);

void to_json(nlohmann::json& j, const BezierCurve& c);
void from_json(const nlohmann::json& j, BezierCurve& c);
void to_json(nlohmann::json& j, const IdentitySpec& s);
void from_json(const nlohmann::json& j, IdentitySpec& s);

void save_identity_corpus(const std::filesystem::path& path, const std::vector<IdentitySpec>& ids);
std::vector<IdentitySpec> load_identity_corpus(const std::filesystem::path& path);

}  // namespace palmforge::crease
