#include "palmforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "palmforge/errors.hpp"
#include "palmforge/image_io.hpp"
#include "palmforge/parallel.hpp"
#include "palmforge/rng.hpp"

namespace palmforge::pipe {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagIdentitySpec = 0x1D;
constexpr std::uint64_t kTagCapture = 0xCA;
constexpr std::uint64_t kTagStage1 = 0x51D;
constexpr std::uint64_t kTagRender = 0x52D;
constexpr std::uint64_t kTagRenderRun = 0xEB;

std::string id_rel(std::int64_t id, const std::string& name) {
    return "ids/" + std::to_string(id) + "/" + name;
}

// Assembles the corpus in a sibling staging directory and renames it over
// the target, so the target either appears complete or not at all.
DatasetManifest commit_corpus(const fs::path& out_dir, std::vector<ManifestRecord> records,
                              const std::vector<std::pair<std::string, const img::Image*>>& files) {
    if (out_dir.empty()) throw InvalidArgument("corpus: output directory required");
    if (fs::exists(out_dir)) throw IoError("corpus: output already exists: " + out_dir.string());
    const fs::path staging = out_dir.string() + ".staging";
    fs::remove_all(staging);
    try {
        for (const auto& [rel, im] : files) {
            const fs::path p = staging / rel;
            fs::create_directories(p.parent_path());
            img::save_png(p, *im);
        }
        DatasetManifest m;
        m.base_dir = staging;
        m.records = std::move(records);
        save_manifest(staging / "manifest.jsonl", m);
        fs::rename(staging, out_dir);
        m.base_dir = out_dir;
        return m;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

// Bucket index by quantile thresholds over the sample itself; matches the
// matcher's calibration rule (label = number of thresholds <= value).
std::vector<int> quantile_labels(const std::vector<double>& values, int bins) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> thresholds;
    for (int q = 1; q < bins; ++q)
        thresholds.push_back(sorted[sorted.size() * static_cast<std::size_t>(q) / bins]);
    std::vector<int> labels(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        int label = 0;
        for (double t : thresholds)
            if (t <= values[i]) ++label;
        labels[i] = label;
    }
    return labels;
}

}  // namespace

void RealCorpusConfig::validate() const {
    if (n_ids < 1) throw InvalidArgument("real corpus: n_ids must be >= 1");
    if (images_per_id < 1) throw InvalidArgument("real corpus: images_per_id must be >= 1");
    if (side < 8) throw InvalidArgument("real corpus: side must be >= 8");
    if (warp_max_disp < 0) throw InvalidArgument("real corpus: warp_max_disp must be >= 0");
    if (quality_bins < 1) throw InvalidArgument("real corpus: quality_bins must be >= 1");
    crease_cfg.validate();
    texture_cfg.validate();
    if (out_dir.empty()) throw InvalidArgument("real corpus: out_dir required");
}

DatasetManifest generate_real_corpus(const RealCorpusConfig& cfg) {
    cfg.validate();
    if (fs::exists(cfg.out_dir))
        throw IoError("real corpus: output already exists: " + cfg.out_dir.string());

    const std::size_t per = static_cast<std::size_t>(cfg.images_per_id);
    const std::size_t total = static_cast<std::size_t>(cfg.n_ids) * per;
    std::vector<img::Image> images(total);
    std::vector<std::uint64_t> seeds(total);
    parallel_for(static_cast<std::size_t>(cfg.n_ids), [&](std::size_t i) {
        crease::IdentitySpec spec =
            crease::sample_identity(derive_seed(cfg.seed, kTagIdentitySpec, i), cfg.crease_cfg);
        spec.id = static_cast<std::int64_t>(i);
        const img::Image base = crease::render_creases(spec, cfg.side, cfg.side);
        for (std::size_t k = 0; k < per; ++k) {
            const std::uint64_t cap = derive_seed(cfg.seed, kTagCapture, i * per + k);
            const Homography h = geom::random_small_homography(derive_seed(cap, 1), cfg.side,
                                                               cfg.side, cfg.warp_max_disp);
            const img::Image warped = img::warp_perspective(base, h, 1.0f);
            images[i * per + k] =
                crease::composite_texture(warped, derive_seed(cap, 2), cfg.texture_cfg);
            seeds[i * per + k] = cap;
        }
    });

    // contrast stands in for capture quality until a matcher is trained
    std::vector<double> contrast(total);
    for (std::size_t i = 0; i < total; ++i) {
        double mean = 0;
        for (float v : images[i].pixels) mean += v;
        mean /= static_cast<double>(images[i].size());
        double var = 0;
        for (float v : images[i].pixels) var += (v - mean) * (v - mean);
        contrast[i] = std::sqrt(var / static_cast<double>(images[i].size()));
    }
    const std::vector<int> labels = quantile_labels(contrast, cfg.quality_bins);

    std::vector<ManifestRecord> records;
    std::vector<std::pair<std::string, const img::Image*>> files;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_ids); ++i)
        for (std::size_t k = 0; k < per; ++k) {
            const std::size_t idx = i * per + k;
            const std::string rel =
                id_rel(static_cast<std::int64_t>(i), "r" + std::to_string(k) + ".png");
            ManifestRecord r;
            r.identity_id = static_cast<std::int64_t>(i);
            r.image_path = rel;
            r.source = "real-analog";
            r.quality_label = labels[idx];
            r.seed = seeds[idx];
            records.push_back(std::move(r));
            files.emplace_back(rel, &images[idx]);
        }
    return commit_corpus(cfg.out_dir, std::move(records), files);
}

std::vector<IdentitySample> synthesize_identities(const nn::DenoiserParams<float>& model_s1,
                                                  const diff::NoiseSchedule& sched, int n_ids,
                                                  int quality_token, std::uint64_t seed) {
    if (model_s1.cfg.control)
        throw InvalidArgument("synthesize: conditional model given, need the stage-one model");
    if (n_ids < 1) throw InvalidArgument("synthesize: n_ids must be >= 1");
    if (quality_token < 0 || quality_token >= model_s1.cfg.quality_tokens)
        throw InvalidArgument("synthesize: quality token out of range");

    std::vector<IdentitySample> out(n_ids);
    parallel_for(static_cast<std::size_t>(n_ids), [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, kTagStage1, i);
        out[i] = {static_cast<std::int64_t>(i),
                  diff::sample(model_s1, sched, quality_token, nullptr, s, 1)[0], s};
    });
    return out;
}

RenderResult render_variations(const nn::DenoiserParams<float>& model_s2,
                               const diff::NoiseSchedule& sched, const img::Image& identity_image,
                               int k, const geom::HomographyBank& bank,
                               const std::vector<int>& quality_menu, std::uint64_t seed) {
    if (!model_s2.cfg.control)
        throw InvalidArgument("render: unconditional model given, need the stage-two model");
    if (k < 1) throw InvalidArgument("render: k must be >= 1");
    if (bank.entries.empty()) throw BankEmpty("render: homography bank is empty");
    if (quality_menu.empty()) throw InvalidArgument("render: quality menu is empty");
    for (int q : quality_menu)
        if (q < 0 || q >= model_s2.cfg.quality_tokens)
            throw InvalidArgument("render: quality token out of range");
    const int side = model_s2.cfg.image_size;
    if (identity_image.width != side || identity_image.height != side)
        throw InvalidArgument("render: identity image resolution mismatch");

    const img::BinaryImage line_map = lines::extract_lines(identity_image);

    RenderResult r;
    r.images.resize(k);
    r.homography_indices.resize(k);
    r.quality_tokens.resize(k);
    r.seeds.resize(k);
    // serial by design: callers parallelize across identities
    for (int j = 0; j < k; ++j) {
        const std::uint64_t rs = derive_seed(seed, kTagRender, static_cast<std::uint64_t>(j));
        const int hi = geom::sample_homography_index(bank, derive_seed(rs, 1));
        const img::BinaryImage warped = img::warp_binary(line_map, bank.entries[hi]);
        const int token = quality_menu[static_cast<std::size_t>(
            Rng(derive_seed(rs, 2)).uniform_index(quality_menu.size()))];
        const std::uint64_t chain_seed = derive_seed(rs, 3);
        r.images[j] = diff::sample(model_s2, sched, token, &warped, chain_seed, 1)[0];
        r.homography_indices[j] = hi;
        r.quality_tokens[j] = token;
        r.seeds[j] = chain_seed;
    }
    return r;
}

void BuildCorpusConfig::validate() const {
    if (n_ids < 1) throw InvalidArgument("build_corpus: n_ids must be >= 1");
    if (renders_per_id < 1) throw InvalidArgument("build_corpus: renders_per_id must be >= 1");
    if (out_dir.empty()) throw InvalidArgument("build_corpus: out_dir required");
}

DatasetManifest build_corpus(const BuildCorpusConfig& cfg,
                             const nn::DenoiserParams<float>& model_s1,
                             const diff::NoiseSchedule& sched_s1,
                             const nn::DenoiserParams<float>& model_s2,
                             const diff::NoiseSchedule& sched_s2,
                             const geom::HomographyBank& bank,
                             const eval::MatcherParams& matcher) {
    cfg.validate();
    if (model_s1.cfg.control || !model_s2.cfg.control)
        throw InvalidArgument("build_corpus: stage mismatch between the two models");
    if (fs::exists(cfg.out_dir))
        throw IoError("build_corpus: output already exists: " + cfg.out_dir.string());

    std::vector<int> menu = cfg.quality_menu;
    if (menu.empty()) {
        menu.resize(model_s2.cfg.quality_tokens);
        std::iota(menu.begin(), menu.end(), 0);
    }
    const int id_token = cfg.identity_quality_token < 0 ? model_s1.cfg.quality_tokens - 1
                                                        : cfg.identity_quality_token;

    const std::vector<IdentitySample> identities =
        synthesize_identities(model_s1, sched_s1, cfg.n_ids, id_token, cfg.seed);

    std::vector<RenderResult> renders(cfg.n_ids);
    parallel_for(static_cast<std::size_t>(cfg.n_ids), [&](std::size_t i) {
        renders[i] = render_variations(model_s2, sched_s2, identities[i].image, cfg.renders_per_id,
                                       bank, menu, derive_seed(cfg.seed, kTagRenderRun, i));
    });

    const std::size_t per = static_cast<std::size_t>(cfg.renders_per_id) + 1;
    std::vector<int> labels(static_cast<std::size_t>(cfg.n_ids) * per);
    parallel_for(static_cast<std::size_t>(cfg.n_ids), [&](std::size_t i) {
        labels[i * per] = eval::quality_label(matcher, identities[i].image);
        for (int j = 0; j < cfg.renders_per_id; ++j)
            labels[i * per + 1 + j] = eval::quality_label(matcher, renders[i].images[j]);
    });

    std::vector<ManifestRecord> records;
    std::vector<std::pair<std::string, const img::Image*>> files;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_ids); ++i) {
        const std::int64_t id = identities[i].identity_id;
        {
            ManifestRecord r;
            r.identity_id = id;
            r.image_path = id_rel(id, "s1.png");
            r.source = "stage1";
            r.quality_label = labels[i * per];
            r.seed = identities[i].seed;
            files.emplace_back(r.image_path, &identities[i].image);
            records.push_back(std::move(r));
        }
        for (int j = 0; j < cfg.renders_per_id; ++j) {
            ManifestRecord r;
            r.identity_id = id;
            r.image_path = id_rel(id, "r" + std::to_string(j) + ".png");
            r.source = "stage2";
            r.quality_label = labels[i * per + 1 + static_cast<std::size_t>(j)];
            r.homography_index = renders[i].homography_indices[j];
            r.seed = renders[i].seeds[j];
            files.emplace_back(r.image_path, &renders[i].images[j]);
            records.push_back(std::move(r));
        }
    }
    return commit_corpus(cfg.out_dir, std::move(records), files);
}

}  // namespace palmforge::pipe
