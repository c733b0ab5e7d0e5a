#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "palmforge/crease.hpp"
#include "palmforge/diffusion.hpp"
#include "palmforge/geometry.hpp"
#include "palmforge/lineextract.hpp"
#include "palmforge/manifest.hpp"
#include "palmforge/matcher.hpp"

namespace palmforge::pipe {

struct RealCorpusConfig {
    int n_ids = 50;
    int images_per_id = 4;
    int side = 64;
    double warp_max_disp = 3.0;  // per-capture perspective jitter, px
    crease::CreaseConfig crease_cfg;
    crease::TextureConfig texture_cfg;
    int quality_bins = 3;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;

    void validate() const;
};

// Crease-identity captures standing in for real palm images: each capture
// warps the identity's crease render by a small random homography and
// composites a texture field. Quality labels are contrast tertiles; the
// trained matcher later supplies the calibrated labels.
DatasetManifest generate_real_corpus(const RealCorpusConfig& cfg);

struct IdentitySample {
    std::int64_t identity_id = 0;
    img::Image image;
    std::uint64_t seed = 0;  // chain seed that reproduces the image
};

// One unconditional sample per identity, ids 0..n_ids-1, every chain on its
// own derived stream.
std::vector<IdentitySample> synthesize_identities(const nn::DenoiserParams<float>& model_s1,
                                                  const diff::NoiseSchedule& sched, int n_ids,
                                                  int quality_token, std::uint64_t seed);

struct RenderResult {
    std::vector<img::Image> images;
    std::vector<int> homography_indices;  // into the bank
    std::vector<int> quality_tokens;
    std::vector<std::uint64_t> seeds;  // per-render chain seeds
};

// k conditional renders of one identity: extract the line map once, then per
// render draw a bank homography, warp the lines, draw a quality token from
// the menu, and run the conditional sampler on a fresh derived stream.
RenderResult render_variations(const nn::DenoiserParams<float>& model_s2,
                               const diff::NoiseSchedule& sched, const img::Image& identity_image,
                               int k, const geom::HomographyBank& bank,
                               const std::vector<int>& quality_menu, std::uint64_t seed);

inline int quality_label(const img::Image& im, const eval::MatcherParams& matcher) {
    return eval::quality_label(matcher, im);
}

struct BuildCorpusConfig {
    int n_ids = 200;
    int renders_per_id = 20;
    int identity_quality_token = -1;   // -1: highest available token
    std::vector<int> quality_menu;     // empty: uniform over all tokens
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;

    void validate() const;
};

// Full synthesis run: stage-one identities, stage-two renders per identity,
// PNGs plus a manifest under out_dir. Assembled in a temp directory and
// renamed in place on success, removed on failure.
DatasetManifest build_corpus(const BuildCorpusConfig& cfg,
                             const nn::DenoiserParams<float>& model_s1,
                             const diff::NoiseSchedule& sched_s1,
                             const nn::DenoiserParams<float>& model_s2,
                             const diff::NoiseSchedule& sched_s2,
                             const geom::HomographyBank& bank,
                             const eval::MatcherParams& matcher);

}  // namespace palmforge::pipe
