#include "palmforge/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "palmforge/brief_pattern.hpp"
#include "palmforge/errors.hpp"
#include "palmforge/rng.hpp"

namespace palmforge::geom {

namespace {

// 16-pixel Bresenham circle of radius 3, clockwise from the top.
constexpr int kCircle[16][2] = {
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},   {3, 1},   {2, 2},   {1, 3},
    {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0},  {-3, -1}, {-2, -2}, {-1, -3}};

constexpr int kDetectMargin = kBriefPatchRadius;  // orientation + descriptor stay in bounds

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Longest circular run of set flags, capped at 16.
int max_circular_run(const std::array<bool, 16>& flags) {
    int best = 0, run = 0;
    for (int i = 0; i < 32; ++i) {
        if (flags[i % 16]) {
            if (++run > best) best = run;
            if (best >= 16) return 16;
        } else {
            run = 0;
        }
    }
    return best;
}

struct NormTransform {
    double scale = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    Vec2 apply(const Vec2& p) const { return {scale * (p.x - cx), scale * (p.y - cy)}; }

    Homography matrix() const {
        Homography t;
        t.m = {scale, 0, -scale * cx, 0, scale, -scale * cy, 0, 0, 1};
        return t;
    }
};

NormTransform hartley_normalization(const std::vector<Vec2>& pts) {
    double cx = 0, cy = 0;
    for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= pts.size();
    cy /= pts.size();
    double mean_dist = 0;
    for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= pts.size();
    if (mean_dist < 1e-9) throw DegenerateData("dlt: coincident points");
    return {std::sqrt(2.0) / mean_dist, cx, cy};
}

// Gaussian elimination with partial pivoting; solves in place.
void solve_linear(std::array<std::array<double, 9>, 8>& aug) {
    for (int col = 0; col < 8; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
        if (std::abs(aug[pivot][col]) < 1e-12) throw DegenerateData("dlt: singular system");
        std::swap(aug[col], aug[pivot]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = aug[r][col] / aug[col][col];
            for (int c = col; c < 9; ++c) aug[r][c] -= f * aug[col][c];
        }
    }
    for (int r = 0; r < 8; ++r) aug[r][8] /= aug[r][r];
}

bool collinear_triple_present(const std::vector<Vec2>& pts) {
    const int n = static_cast<int>(pts.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                const double cross = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) -
                                     (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
                if (std::abs(cross) < 1e-6) return true;
            }
    return false;
}

double symmetric_transfer_error(const Homography& h, const Homography& hinv,
                                const Vec2& src, const Vec2& dst) {
    const Vec2 f = h.apply(src);
    const Vec2 b = hinv.apply(dst);
    return std::max(std::hypot(f.x - dst.x, f.y - dst.y), std::hypot(b.x - src.x, b.y - src.y));
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const img::Image& image, int max_n, const OrbConfig& cfg) {
    if (image.width < 32 || image.height < 32)
        throw InvalidArgument("detect_keypoints: image must be at least 32x32");
    if (max_n < 0) throw InvalidArgument("detect_keypoints: max_n must be >= 0");

    const int w = image.width, h = image.height;
    const double tau = cfg.fast_threshold;

    std::vector<double> score(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = kDetectMargin; y < h - kDetectMargin; ++y) {
        for (int x = kDetectMargin; x < w - kDetectMargin; ++x) {
            const double center = image.at(x, y);
            std::array<bool, 16> brighter{}, darker{};
            double s = 0.0;
            for (int i = 0; i < 16; ++i) {
                const double v = image.at(x + kCircle[i][0], y + kCircle[i][1]);
                brighter[i] = v > center + tau;
                darker[i] = v < center - tau;
                const double d = std::abs(v - center) - tau;
                if (d > 0) s += d;
            }
            if (max_circular_run(brighter) >= 9 || max_circular_run(darker) >= 9)
                score[static_cast<std::size_t>(y) * w + x] = s;
        }
    }

    // 3x3 non-max suppression; ties resolved toward smaller (y, x)
    std::vector<Keypoint> kps;
    for (int y = kDetectMargin; y < h - kDetectMargin; ++y) {
        for (int x = kDetectMargin; x < w - kDetectMargin; ++x) {
            const double s = score[static_cast<std::size_t>(y) * w + x];
            if (s <= 0.0) continue;
            bool maximal = true;
            for (int dy = -1; dy <= 1 && maximal; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const double sn = score[static_cast<std::size_t>(y + dy) * w + (x + dx)];
                    if (sn > s || (sn == s && (dy < 0 || (dy == 0 && dx < 0)))) {
                        maximal = false;
                        break;
                    }
                }
            if (!maximal) continue;
            Keypoint kp;
            kp.x = x;
            kp.y = y;
            kp.response = s;
            kps.push_back(kp);
        }
    }

    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (static_cast<int>(kps.size()) > max_n) kps.resize(max_n);

    const img::Image smooth = img::gaussian_blur(image, 5, 1.1);
    for (auto& kp : kps) {
        const int cx = static_cast<int>(kp.x), cy = static_cast<int>(kp.y);
        // intensity centroid orientation over the patch disc
        double m10 = 0, m01 = 0;
        for (int dy = -kBriefPatchRadius; dy <= kBriefPatchRadius; ++dy)
            for (int dx = -kBriefPatchRadius; dx <= kBriefPatchRadius; ++dx) {
                if (dx * dx + dy * dy > kBriefPatchRadius * kBriefPatchRadius) continue;
                const double v = smooth.at(cx + dx, cy + dy);
                m10 += dx * v;
                m01 += dy * v;
            }
        kp.orientation = std::atan2(m01, m10);

        const double c = std::cos(kp.orientation), s = std::sin(kp.orientation);
        kp.descriptor = {};
        for (int i = 0; i < 256; ++i) {
            const int ax = kBriefPattern[4 * i], ay = kBriefPattern[4 * i + 1];
            const int bx = kBriefPattern[4 * i + 2], by = kBriefPattern[4 * i + 3];
            const int rax = clampi(cx + static_cast<int>(std::lround(c * ax - s * ay)), 0, w - 1);
            const int ray = clampi(cy + static_cast<int>(std::lround(s * ax + c * ay)), 0, h - 1);
            const int rbx = clampi(cx + static_cast<int>(std::lround(c * bx - s * by)), 0, w - 1);
            const int rby = clampi(cy + static_cast<int>(std::lround(s * bx + c * by)), 0, h - 1);
            if (smooth.at(rax, ray) < smooth.at(rbx, rby))
                kp.descriptor[i / 64] |= std::uint64_t{1} << (i % 64);
        }
    }
    return kps;
}

int hamming_distance(const std::array<std::uint64_t, 4>& a, const std::array<std::uint64_t, 4>& b) {
    int d = 0;
    for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
    return d;
}

std::vector<std::pair<int, int>> match_descriptors(const std::vector<Keypoint>& a,
                                                   const std::vector<Keypoint>& b,
                                                   int max_hamming) {
    const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
    std::vector<std::pair<int, int>> out;
    if (na == 0 || nb == 0) return out;

    // nearest neighbor in b for every a, lowest index on ties
    std::vector<int> nn_ab(na, -1), nn_ba(nb, -1);
    std::vector<int> best_ab(na, std::numeric_limits<int>::max());
    std::vector<int> best_ba(nb, std::numeric_limits<int>::max());
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) {
            const int d = hamming_distance(a[i].descriptor, b[j].descriptor);
            if (d < best_ab[i]) {
                best_ab[i] = d;
                nn_ab[i] = j;
            }
            if (d < best_ba[j]) {
                best_ba[j] = d;
                nn_ba[j] = i;
            }
        }

    for (int i = 0; i < na; ++i) {
        const int j = nn_ab[i];
        if (j >= 0 && best_ab[i] <= max_hamming && nn_ba[j] == i) out.emplace_back(i, j);
    }
    return out;
}

Homography fit_homography_dlt(const std::vector<std::pair<Vec2, Vec2>>& pairs) {
    if (pairs.size() < 4) throw InsufficientData("dlt: at least 4 correspondences required");

    std::vector<Vec2> src, dst;
    src.reserve(pairs.size());
    dst.reserve(pairs.size());
    for (const auto& [s, d] : pairs) {
        src.push_back(s);
        dst.push_back(d);
    }
    const NormTransform ts = hartley_normalization(src);
    const NormTransform td = hartley_normalization(dst);

    // normal equations for the 8 unknowns with h[8] fixed to 1
    std::array<std::array<double, 9>, 8> aug{};
    auto accumulate_row = [&aug](const std::array<double, 8>& row, double rhs) {
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) aug[i][j] += row[i] * row[j];
            aug[i][8] += row[i] * rhs;
        }
    };
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Vec2 s = ts.apply(src[k]);
        const Vec2 d = td.apply(dst[k]);
        accumulate_row({s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y}, d.x);
        accumulate_row({0, 0, 0, s.x, s.y, 1, -d.y * s.x, -d.y * s.y}, d.y);
    }
    solve_linear(aug);

    Homography hn;
    for (int i = 0; i < 8; ++i) hn.m[i] = aug[i][8];
    hn.m[8] = 1.0;

    const Homography h = td.matrix().inverse().compose(hn).compose(ts.matrix());
    return h.normalized();
}

RansacResult estimate_homography_ransac(const std::vector<std::pair<Vec2, Vec2>>& pairs,
                                        int iters, double inlier_px, std::uint64_t rng_seed) {
    const int n = static_cast<int>(pairs.size());
    if (n < 4) throw InsufficientData("ransac: at least 4 correspondences required");

    Rng rng(derive_seed(rng_seed, 0x4A5C));
    auto count_inliers = [&](const Homography& h, std::vector<std::uint8_t>& mask) {
        const Homography hinv = h.inverse();
        int count = 0;
        mask.assign(n, 0);
        for (int i = 0; i < n; ++i) {
            if (symmetric_transfer_error(h, hinv, pairs[i].first, pairs[i].second) <= inlier_px) {
                mask[i] = 1;
                ++count;
            }
        }
        return count;
    };

    Homography best_h;
    std::vector<std::uint8_t> best_mask;
    int best_count = 0;

    std::vector<std::pair<Vec2, Vec2>> sample(4);
    for (int it = 0; it < iters; ++it) {
        int idx[4];
        idx[0] = static_cast<int>(rng.uniform_index(n));
        for (int k = 1; k < 4; ++k) {
            bool fresh;
            do {
                idx[k] = static_cast<int>(rng.uniform_index(n));
                fresh = true;
                for (int j = 0; j < k; ++j)
                    if (idx[j] == idx[k]) fresh = false;
            } while (!fresh);
        }
        std::vector<Vec2> s4, d4;
        for (int k = 0; k < 4; ++k) {
            sample[k] = pairs[idx[k]];
            s4.push_back(sample[k].first);
            d4.push_back(sample[k].second);
        }
        if (collinear_triple_present(s4) || collinear_triple_present(d4)) continue;

        Homography h;
        try {
            h = fit_homography_dlt(sample);
        } catch (const DegenerateData&) {
            continue;
        }
        if (std::abs(h.det()) < 1e-12) continue;

        std::vector<std::uint8_t> mask;
        const int count = count_inliers(h, mask);
        if (count > best_count) {
            best_count = count;
            best_h = h;
            best_mask = std::move(mask);
        }
    }

    if (best_count < 4) throw NoConsensus("ransac: no model reached 4 inliers");

    // refit on the consensus set; fall back to the minimal-sample model if the
    // refit loses inliers (best-so-far contract)
    std::vector<std::pair<Vec2, Vec2>> consensus;
    for (int i = 0; i < n; ++i)
        if (best_mask[i]) consensus.push_back(pairs[i]);
    try {
        const Homography refit = fit_homography_dlt(consensus);
        if (std::abs(refit.det()) >= 1e-12) {
            std::vector<std::uint8_t> mask;
            const int count = count_inliers(refit, mask);
            if (count >= best_count) {
                best_h = refit;
                best_count = count;
                best_mask = std::move(mask);
            }
        }
    } catch (const DegenerateData&) {
    }

    return RansacResult{best_h.normalized(), std::move(best_mask), best_count};
}

Homography homography_from_corner_offsets(int width, int height,
                                          const std::array<Vec2, 4>& offsets) {
    const std::array<Vec2, 4> corners = {Vec2{0, 0}, Vec2{static_cast<double>(width - 1), 0},
                                         Vec2{static_cast<double>(width - 1), static_cast<double>(height - 1)},
                                         Vec2{0, static_cast<double>(height - 1)}};
    std::vector<std::pair<Vec2, Vec2>> pairs;
    for (int i = 0; i < 4; ++i)
        pairs.emplace_back(corners[i], Vec2{corners[i].x + offsets[i].x, corners[i].y + offsets[i].y});
    return fit_homography_dlt(pairs);
}

Homography random_small_homography(std::uint64_t seed, int width, int height, double max_disp_px) {
    Rng rng(derive_seed(seed, 0xC0FE));
    std::array<Vec2, 4> offs;
    for (auto& o : offs) o = {rng.uniform(-max_disp_px, max_disp_px), rng.uniform(-max_disp_px, max_disp_px)};
    return homography_from_corner_offsets(width, height, offs);
}

double corner_displacement(const Homography& h, int width, int height) {
    const std::array<Vec2, 4> corners = {Vec2{0, 0}, Vec2{static_cast<double>(width - 1), 0},
                                         Vec2{static_cast<double>(width - 1), static_cast<double>(height - 1)},
                                         Vec2{0, static_cast<double>(height - 1)}};
    double worst = 0.0;
    for (const auto& c : corners) {
        const Vec2 p = h.apply(c);
        worst = std::max(worst, std::hypot(p.x - c.x, p.y - c.y));
    }
    return worst;
}

HomographyBank build_homography_bank(
    const std::vector<std::pair<img::Image, img::Image>>& genuine_pairs, const BankConfig& cfg) {
    if (genuine_pairs.empty()) throw InvalidArgument("bank: at least one genuine pair required");

    HomographyBank bank;
    bank.cfg = cfg;
    for (std::size_t p = 0; p < genuine_pairs.size(); ++p) {
        const auto& [a, b] = genuine_pairs[p];
        const auto ka = detect_keypoints(a, cfg.orb.max_keypoints, cfg.orb);
        const auto kb = detect_keypoints(b, cfg.orb.max_keypoints, cfg.orb);
        const auto matches = match_descriptors(ka, kb, cfg.max_hamming);
        if (static_cast<int>(matches.size()) < 4) continue;

        std::vector<std::pair<Vec2, Vec2>> pts;
        pts.reserve(matches.size());
        for (const auto& [i, j] : matches)
            pts.emplace_back(Vec2{ka[i].x, ka[i].y}, Vec2{kb[j].x, kb[j].y});

        RansacResult res;
        try {
            res = estimate_homography_ransac(pts, cfg.ransac_iters, cfg.inlier_px,
                                             derive_seed(cfg.seed, p));
        } catch (const NoConsensus&) {
            continue;
        }
        if (res.inlier_count < cfg.min_inliers) continue;
        if (corner_displacement(res.h, a.width, a.height) > cfg.max_corner_disp_frac * a.width)
            continue;

        const Homography hinv = res.h.inverse();
        double err = 0.0;
        int cnt = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!res.inlier_mask[i]) continue;
            err += symmetric_transfer_error(res.h, hinv, pts[i].first, pts[i].second);
            ++cnt;
        }
        bank.entries.push_back(res.h);
        bank.source_pair_ids.push_back("pair" + std::to_string(p));
        bank.stats.push_back({res.inlier_count, cnt ? err / cnt : 0.0});
    }
    if (bank.entries.empty()) throw BankEmpty("bank: no pair produced an accepted homography");
    return bank;
}

int sample_homography_index(const HomographyBank& bank, std::uint64_t rng_seed) {
    if (bank.entries.empty()) throw BankEmpty("bank: cannot sample from empty bank");
    Rng rng(derive_seed(rng_seed, 0xBA));
    return static_cast<int>(rng.uniform_index(bank.entries.size()));
}

Homography sample_homography(const HomographyBank& bank, std::uint64_t rng_seed) {
    return bank.entries[sample_homography_index(bank, rng_seed)];
}

void save_bank(const std::filesystem::path& path, const HomographyBank& bank) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        entries.push_back({{"m", bank.entries[i].m},
                           {"inliers", bank.stats[i].inliers},
                           {"mean_err", bank.stats[i].mean_reproj_err},
                           {"src", bank.source_pair_ids[i]}});
    }
    const nlohmann::json j = {
        {"entries", entries},
        {"cfg",
         {{"fast_threshold", bank.cfg.orb.fast_threshold},
          {"max_keypoints", bank.cfg.orb.max_keypoints},
          {"max_hamming", bank.cfg.max_hamming},
          {"ransac_iters", bank.cfg.ransac_iters},
          {"inlier_px", bank.cfg.inlier_px},
          {"min_inliers", bank.cfg.min_inliers},
          {"max_corner_disp_frac", bank.cfg.max_corner_disp_frac},
          {"seed", bank.cfg.seed}}}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write bank: " + path.string());
    out << j.dump(1) << "\n";
}

HomographyBank load_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read bank: " + path.string());
    nlohmann::json j;
    in >> j;

    HomographyBank bank;
    const auto& cfg = j.at("cfg");
    bank.cfg.orb.fast_threshold = cfg.at("fast_threshold").get<double>();
    bank.cfg.orb.max_keypoints = cfg.at("max_keypoints").get<int>();
    bank.cfg.max_hamming = cfg.at("max_hamming").get<int>();
    bank.cfg.ransac_iters = cfg.at("ransac_iters").get<int>();
    bank.cfg.inlier_px = cfg.at("inlier_px").get<double>();
    bank.cfg.min_inliers = cfg.at("min_inliers").get<int>();
    bank.cfg.max_corner_disp_frac = cfg.at("max_corner_disp_frac").get<double>();
    bank.cfg.seed = cfg.at("seed").get<std::uint64_t>();

    for (const auto& e : j.at("entries")) {
        Homography h;
        h.m = e.at("m").get<std::array<double, 9>>();
        bank.entries.push_back(h);
        bank.stats.push_back({e.at("inliers").get<int>(), e.at("mean_err").get<double>()});
        bank.source_pair_ids.push_back(e.at("src").get<std::string>());
    }
    return bank;
}

}  // namespace palmforge::geom
