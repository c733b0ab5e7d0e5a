#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "palmforge/homography.hpp"
#include "palmforge/image.hpp"

namespace palmforge::geom {

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double orientation = 0.0;  // radians
    double response = 0.0;
    std::array<std::uint64_t, 4> descriptor{};  // 256-bit steered BRIEF
};

struct OrbConfig {
    double fast_threshold = 0.06;  // on the [0,1] intensity scale
    int max_keypoints = 500;
};

struct RansacResult {
    Homography h;
    std::vector<std::uint8_t> inlier_mask;
    int inlier_count = 0;
};

struct BankConfig {
    OrbConfig orb;
    int max_hamming = 64;
    int ransac_iters = 500;
    double inlier_px = 1.5;
    int min_inliers = 12;
    double max_corner_disp_frac = 0.12;  // of image width
    std::uint64_t seed = 1;
};

struct BankEntryStats {
    int inliers = 0;
    double mean_reproj_err = 0.0;
};

struct HomographyBank {
    std::vector<Homography> entries;
    std::vector<std::string> source_pair_ids;
    std::vector<BankEntryStats> stats;
    BankConfig cfg;
};

// FAST-9 corners with intensity-centroid orientation and a steered 256-bit
// BRIEF descriptor from the committed sampling pattern. Strongest response
// first; ties break on (y, x) so output is platform-stable.
std::vector<Keypoint> detect_keypoints(const img::Image& image, int max_n,
                                       const OrbConfig& cfg = {});

int hamming_distance(const std::array<std::uint64_t, 4>& a, const std::array<std::uint64_t, 4>& b);

// Mutual nearest neighbors under Hamming distance, pairs at most max_hamming
// apart, indices unique on both sides.
std::vector<std::pair<int, int>> match_descriptors(const std::vector<Keypoint>& a,
                                                   const std::vector<Keypoint>& b,
                                                   int max_hamming);

// Classic RANSAC: 4-point minimal sample, normalized DLT, symmetric transfer
// error, final refit on all inliers. Deterministic given the seed.
RansacResult estimate_homography_ransac(const std::vector<std::pair<Vec2, Vec2>>& pairs,
                                        int iters, double inlier_px, std::uint64_t rng_seed);

// Least-squares normalized DLT over >= 4 correspondences.
Homography fit_homography_dlt(const std::vector<std::pair<Vec2, Vec2>>& pairs);

// Homography sending the image corners to corners + offsets (4 x/y pairs).
Homography homography_from_corner_offsets(int width, int height,
                                          const std::array<Vec2, 4>& offsets);

// Random perspective jitter with every corner displaced at most max_disp_px.
Homography random_small_homography(std::uint64_t seed, int width, int height,
                                   double max_disp_px);

// Largest corner displacement |H c - c| over the four image corners.
double corner_displacement(const Homography& h, int width, int height);

HomographyBank build_homography_bank(
    const std::vector<std::pair<img::Image, img::Image>>& genuine_pairs, const BankConfig& cfg);

int sample_homography_index(const HomographyBank& bank, std::uint64_t rng_seed);
Homography sample_homography(const HomographyBank& bank, std::uint64_t rng_seed);

void save_bank(const std::filesystem::path& path, const HomographyBank& bank);
HomographyBank load_bank(const std::filesystem::path& path);

}  // namespace palmforge::geom
