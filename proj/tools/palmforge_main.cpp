#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "palmforge/checkpoint.hpp"
#include "palmforge/diffusion.hpp"
#include "palmforge/errors.hpp"
#include "palmforge/geometry.hpp"
#include "palmforge/image_io.hpp"
#include "palmforge/lineextract.hpp"
#include "palmforge/manifest.hpp"
#include "palmforge/matcher.hpp"
#include "palmforge/nn/adam.hpp"
#include "palmforge/parallel.hpp"
#include "palmforge/pipeline.hpp"
#include "palmforge/scores.hpp"

// Subcommand surface over the library. Every run resolves its settings
// (defaults, then config file, then flags) and writes the resolved copy to
// <out>/config.json so the run is reproducible from that file alone.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace palmforge;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config: " + path);
    return json::parse(in);
}

// flag > config file > default; bound flag variables start at the default
template <class T>
void resolve(const CLI::App& cmd, const std::string& flag, const json& cfg,
             const std::string& key, T& value) {
    if (cmd.count(flag) == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

void write_resolved_config(const fs::path& out_dir, const json& resolved) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.json");
    if (!out) throw IoError("cannot write resolved config under " + out_dir.string());
    out << resolved.dump(2) << "\n";
}

void apply_threads(const CLI::App& cmd, int threads) {
    if (cmd.count("--threads")) setenv("PALMFORGE_THREADS", std::to_string(threads).c_str(), 1);
}

diff::NoiseSchedule schedule_of(const ckpt::TrainState& st) {
    return diff::make_schedule(diff::schedule_from_string(st.schedule),
                               st.params.cfg.timesteps);
}

struct GenCorpusArgs {
    std::string out, config;
    int n = 50, per = 4, side = 64, quality_bins = 3, texture_grid = 6, threads = 0;
    double warp = 3.0, texture_amplitude = 0.35;
    std::uint64_t seed = 1;
};

int run_gen_corpus(const CLI::App& cmd, GenCorpusArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--n", cfg, "n_ids", a.n);
    resolve(cmd, "--per", cfg, "images_per_id", a.per);
    resolve(cmd, "--side", cfg, "side", a.side);
    resolve(cmd, "--warp", cfg, "warp_max_disp", a.warp);
    resolve(cmd, "--texture-amplitude", cfg, "texture_amplitude", a.texture_amplitude);
    resolve(cmd, "--texture-grid", cfg, "texture_grid", a.texture_grid);
    resolve(cmd, "--quality-bins", cfg, "quality_bins", a.quality_bins);
    resolve(cmd, "--seed", cfg, "seed", a.seed);
    apply_threads(cmd, a.threads);

    pipe::RealCorpusConfig rc;
    rc.n_ids = a.n;
    rc.images_per_id = a.per;
    rc.side = a.side;
    rc.warp_max_disp = a.warp;
    rc.texture_cfg.amplitude = a.texture_amplitude;
    rc.texture_cfg.grid = a.texture_grid;
    rc.quality_bins = a.quality_bins;
    rc.seed = a.seed;
    rc.out_dir = fs::path(a.out) / "corpus";
    rc.validate();

    write_resolved_config(a.out, json{{"command", "gen-corpus"},
                                      {"n_ids", rc.n_ids},
                                      {"images_per_id", rc.images_per_id},
                                      {"side", rc.side},
                                      {"warp_max_disp", rc.warp_max_disp},
                                      {"texture_amplitude", rc.texture_cfg.amplitude},
                                      {"texture_grid", rc.texture_cfg.grid},
                                      {"quality_bins", rc.quality_bins},
                                      {"seed", rc.seed},
                                      {"threads", thread_count()}});
    const pipe::DatasetManifest m = pipe::generate_real_corpus(rc);
    std::cout << "wrote " << m.records.size() << " records to " << rc.out_dir.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string stage, data, out, config, init, resume, schedule = "linear";
    std::int64_t steps = 2000, ckpt_every = 500;
    int batch = 8, timesteps = 200, threads = 0;
    double lr = 1e-3, lr_min = 1e-5;
    std::uint64_t seed = 1;
};

diff::TrainSet training_set(const pipe::DatasetManifest& m, bool with_control) {
    const auto labeled = pipe::load_labeled_images(m);
    diff::TrainSet data(labeled.size());
    parallel_for(labeled.size(), [&](std::size_t i) {
        data[i].x0 = labeled[i].first;
        data[i].quality = m.records[i].quality_label;
        if (with_control) {
            const img::BinaryImage lm = lines::extract_lines(labeled[i].first);
            data[i].control = img::Image(lm.width, lm.height);
            for (std::size_t p = 0; p < lm.size(); ++p)
                data[i].control.pixels[p] = lm.bits[p] ? 1.0f : 0.0f;
        }
    });
    return data;
}

int run_train_matcher(TrainArgs& a, const json& cfg) {
    eval::MatcherConfig mc;
    mc.image_size = cfg.value("image_size", mc.image_size);
    mc.c1 = cfg.value("c1", mc.c1);
    mc.c2 = cfg.value("c2", mc.c2);
    mc.c3 = cfg.value("c3", mc.c3);
    mc.c4 = cfg.value("c4", mc.c4);
    mc.embed_dim = cfg.value("embed_dim", mc.embed_dim);
    mc.quality_bins = cfg.value("quality_bins", mc.quality_bins);
    mc.batch = a.batch;
    mc.steps = a.steps;
    mc.base_lr = a.lr;
    mc.lr_min = a.lr_min;
    mc.validate();

    write_resolved_config(
        a.out, json{{"command", "train"},       {"stage", "matcher"},
                    {"data", a.data},           {"image_size", mc.image_size},
                    {"c1", mc.c1},              {"c2", mc.c2},
                    {"c3", mc.c3},              {"c4", mc.c4},
                    {"embed_dim", mc.embed_dim},{"quality_bins", mc.quality_bins},
                    {"batch", mc.batch},        {"steps", mc.steps},
                    {"lr", mc.base_lr},         {"lr_min", mc.lr_min},
                    {"seed", a.seed},           {"threads", thread_count()}});

    const pipe::DatasetManifest m = pipe::load_manifest(a.data);
    const eval::MatcherTrainResult r = eval::train_matcher(m, mc, a.seed);
    eval::save_matcher(fs::path(a.out) / "matcher.pfck", r.model);

    std::ofstream csv(fs::path(a.out) / "loss.csv");
    csv << "step,loss,lr\n";
    csv.precision(10);
    for (std::size_t i = 0; i < r.losses.size(); ++i)
        csv << i << "," << r.losses[i] << ","
            << nn::cosine_lr(static_cast<std::int64_t>(i), mc.steps, mc.base_lr, mc.lr_min)
            << "\n";
    std::cout << "matcher accuracy " << r.final_accuracy << ", model in " << a.out << "\n";
    return 0;
}

int run_train(const CLI::App& cmd, TrainArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--steps", cfg, "steps", a.steps);
    resolve(cmd, "--batch", cfg, "batch", a.batch);
    resolve(cmd, "--lr", cfg, "lr", a.lr);
    resolve(cmd, "--lr-min", cfg, "lr_min", a.lr_min);
    resolve(cmd, "--schedule", cfg, "schedule", a.schedule);
    resolve(cmd, "--timesteps", cfg, "timesteps", a.timesteps);
    resolve(cmd, "--ckpt-every", cfg, "ckpt_every", a.ckpt_every);
    resolve(cmd, "--seed", cfg, "seed", a.seed);
    apply_threads(cmd, a.threads);

    if (a.stage == "matcher") return run_train_matcher(a, cfg);

    diff::TrainRunConfig tc;
    tc.batch = a.batch;
    tc.total_steps = a.steps;
    tc.base_lr = a.lr;
    tc.lr_min = a.lr_min;
    tc.seed = a.seed;
    tc.stage = a.stage == "two" ? 2 : 1;
    tc.ckpt_every = a.ckpt_every;
    tc.out_dir = a.out;

    std::optional<ckpt::TrainState> model_in;
    if (!a.resume.empty()) {
        model_in = ckpt::load_denoiser(a.resume);
    } else if (!a.init.empty()) {
        model_in = ckpt::load_denoiser(a.init);
    } else if (tc.stage == 2) {
        throw InvalidArgument(
            "stage two grows from a stage-one model: pass --init <stage-one checkpoint> "
            "or --resume <stage-two checkpoint>");
    }

    if (model_in) {
        // the checkpoint owns the architecture and noise schedule
        tc.arch = model_in->params.cfg;
        tc.schedule = diff::schedule_from_string(model_in->schedule);
        if (cmd.count("--schedule") || cfg.contains("schedule"))
            tc.schedule = diff::schedule_from_string(a.schedule);
    } else {
        tc.arch.image_size = cfg.value("image_size", tc.arch.image_size);
        tc.arch.c1 = cfg.value("c1", tc.arch.c1);
        tc.arch.c2 = cfg.value("c2", tc.arch.c2);
        tc.arch.c3 = cfg.value("c3", tc.arch.c3);
        tc.arch.emb_dim = cfg.value("emb_dim", tc.arch.emb_dim);
        tc.arch.quality_tokens = cfg.value("quality_tokens", tc.arch.quality_tokens);
        tc.arch.groups = cfg.value("groups", tc.arch.groups);
        tc.arch.timesteps = a.timesteps;
        tc.schedule = diff::schedule_from_string(a.schedule);
    }
    tc.arch.control = tc.stage == 2;  // attach itself happens inside train()
    tc.validate();

    write_resolved_config(
        a.out,
        json{{"command", "train"},
             {"stage", a.stage},
             {"data", a.data},
             {"init", a.init},
             {"resume", a.resume},
             {"schedule", to_string(tc.schedule)},
             {"arch", ckpt::config_to_json(tc.arch)},
             {"batch", tc.batch},
             {"steps", tc.total_steps},
             {"lr", tc.base_lr},
             {"lr_min", tc.lr_min},
             {"ckpt_every", tc.ckpt_every},
             {"seed", tc.seed},
             {"threads", thread_count()}});

    const pipe::DatasetManifest m = pipe::load_manifest(a.data);
    const diff::TrainSet data = training_set(m, tc.stage == 2);
    const diff::TrainResult r = diff::train(tc, data, model_in);
    std::cout << "trained to step " << r.state.step << ", model at " << r.model_path.string()
              << "\n";
    return 0;
}

struct BuildBankArgs {
    std::string data, out, config;
    int pairs_per_id = 3, max_pairs = 200, iters = 500, min_inliers = 12, threads = 0;
    double inlier_px = 1.5, max_corner_frac = 0.12, fast_threshold = 0.06;
    std::uint64_t seed = 1;
};

int run_build_bank(const CLI::App& cmd, BuildBankArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--pairs-per-id", cfg, "pairs_per_id", a.pairs_per_id);
    resolve(cmd, "--max-pairs", cfg, "max_pairs", a.max_pairs);
    resolve(cmd, "--iters", cfg, "ransac_iters", a.iters);
    resolve(cmd, "--inlier-px", cfg, "inlier_px", a.inlier_px);
    resolve(cmd, "--min-inliers", cfg, "min_inliers", a.min_inliers);
    resolve(cmd, "--max-corner-frac", cfg, "max_corner_disp_frac", a.max_corner_frac);
    resolve(cmd, "--fast-threshold", cfg, "fast_threshold", a.fast_threshold);
    resolve(cmd, "--seed", cfg, "seed", a.seed);
    apply_threads(cmd, a.threads);

    geom::BankConfig bc;
    bc.ransac_iters = a.iters;
    bc.inlier_px = a.inlier_px;
    bc.min_inliers = a.min_inliers;
    bc.max_corner_disp_frac = a.max_corner_frac;
    bc.orb.fast_threshold = a.fast_threshold;
    bc.seed = a.seed;

    write_resolved_config(a.out, json{{"command", "build-bank"},
                                      {"data", a.data},
                                      {"pairs_per_id", a.pairs_per_id},
                                      {"max_pairs", a.max_pairs},
                                      {"ransac_iters", bc.ransac_iters},
                                      {"inlier_px", bc.inlier_px},
                                      {"min_inliers", bc.min_inliers},
                                      {"max_corner_disp_frac", bc.max_corner_disp_frac},
                                      {"fast_threshold", bc.orb.fast_threshold},
                                      {"seed", bc.seed},
                                      {"threads", thread_count()}});

    // genuine pairs: consecutive captures of the same identity
    const pipe::DatasetManifest m = pipe::load_manifest(a.data);
    std::vector<std::pair<img::Image, img::Image>> pairs;
    for (std::size_t i = 0; i + 1 < m.records.size() && static_cast<int>(pairs.size()) < a.max_pairs;
         ++i) {
        if (m.records[i].identity_id != m.records[i + 1].identity_id) continue;
        // capture index within the identity, capped per identity
        int within = 0;
        for (std::size_t j = i; j > 0 && m.records[j - 1].identity_id == m.records[i].identity_id;
             --j)
            ++within;
        if (within >= a.pairs_per_id) continue;
        pairs.emplace_back(img::load_png(pipe::record_path(m, m.records[i])),
                           img::load_png(pipe::record_path(m, m.records[i + 1])));
    }

    const geom::HomographyBank bank = geom::build_homography_bank(pairs, bc);
    geom::save_bank(fs::path(a.out) / "bank.json", bank);
    std::cout << "bank holds " << bank.entries.size() << " homographies from " << pairs.size()
              << " pairs\n";
    return 0;
}

struct SynthesizeArgs {
    std::string s1, s2, bank, matcher, out, config;
    int n = 200, k = 20, identity_quality = -1, threads = 0;
    std::vector<int> quality_menu;
    std::uint64_t seed = 1;
};

int run_synthesize(const CLI::App& cmd, SynthesizeArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--n", cfg, "n_ids", a.n);
    resolve(cmd, "--k", cfg, "renders_per_id", a.k);
    resolve(cmd, "--identity-quality", cfg, "identity_quality_token", a.identity_quality);
    resolve(cmd, "--quality-menu", cfg, "quality_menu", a.quality_menu);
    resolve(cmd, "--seed", cfg, "seed", a.seed);
    apply_threads(cmd, a.threads);

    pipe::BuildCorpusConfig bc;
    bc.n_ids = a.n;
    bc.renders_per_id = a.k;
    bc.identity_quality_token = a.identity_quality;
    bc.quality_menu = a.quality_menu;
    bc.seed = a.seed;
    bc.out_dir = fs::path(a.out) / "corpus";
    bc.validate();

    write_resolved_config(a.out, json{{"command", "synthesize"},
                                      {"s1", a.s1},
                                      {"s2", a.s2},
                                      {"bank", a.bank},
                                      {"matcher", a.matcher},
                                      {"n_ids", bc.n_ids},
                                      {"renders_per_id", bc.renders_per_id},
                                      {"identity_quality_token", bc.identity_quality_token},
                                      {"quality_menu", bc.quality_menu},
                                      {"seed", bc.seed},
                                      {"threads", thread_count()}});

    const ckpt::TrainState s1 = ckpt::load_denoiser(a.s1);
    const ckpt::TrainState s2 = ckpt::load_denoiser(a.s2);
    const geom::HomographyBank bank = geom::load_bank(a.bank);
    const eval::MatcherParams matcher = eval::load_matcher(a.matcher);

    const pipe::DatasetManifest m = pipe::build_corpus(bc, s1.params, schedule_of(s1), s2.params,
                                                       schedule_of(s2), bank, matcher);
    std::cout << "wrote " << m.records.size() << " records to " << bc.out_dir.string() << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string real_train, synth, out, config;
    std::vector<std::string> tests;
    double far = 1e-4;
    int threads = 0;
    std::uint64_t seed = 1;
};

int run_evaluate(const CLI::App& cmd, EvaluateArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--far", cfg, "far", a.far);
    resolve(cmd, "--seed", cfg, "seed", a.seed);
    apply_threads(cmd, a.threads);

    eval::MatcherConfig mc;
    mc.image_size = cfg.value("image_size", mc.image_size);
    mc.embed_dim = cfg.value("embed_dim", mc.embed_dim);
    mc.batch = cfg.value("batch", mc.batch);
    mc.steps = cfg.value("steps", mc.steps);
    mc.base_lr = cfg.value("lr", mc.base_lr);
    mc.validate();

    std::vector<std::pair<std::string, pipe::DatasetManifest>> tests;
    json test_names = json::array();
    for (const std::string& spec_str : a.tests) {
        const auto eq = spec_str.find('=');
        const std::string name =
            eq == std::string::npos ? fs::path(spec_str).parent_path().filename().string()
                                    : spec_str.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec_str : spec_str.substr(eq + 1);
        tests.emplace_back(name, pipe::load_manifest(path));
        test_names.push_back(name);
    }

    write_resolved_config(a.out, json{{"command", "evaluate"},
                                      {"real_train", a.real_train},
                                      {"synth", a.synth},
                                      {"tests", test_names},
                                      {"far", a.far},
                                      {"matcher_steps", mc.steps},
                                      {"seed", a.seed},
                                      {"threads", thread_count()}});

    const eval::UtilityReport report =
        eval::utility_experiment(pipe::load_manifest(a.real_train), pipe::load_manifest(a.synth),
                                 tests, mc, a.far, a.seed);
    const std::string csv = eval::report_csv(report);
    std::ofstream out(fs::path(a.out) / "report.csv");
    if (!out) throw IoError("cannot write report under " + a.out);
    out << csv;
    std::cout << csv;
    return 0;
}

struct ReportArgs {
    std::string data, matcher, out, config, protocol = "all-pairs";
    bool plot = false;
    int bins = 50, threads = 0;
};

int run_report(const CLI::App& cmd, ReportArgs& a) {
    const json cfg = load_config_file(a.config);
    resolve(cmd, "--protocol", cfg, "protocol", a.protocol);
    resolve(cmd, "--bins", cfg, "bins", a.bins);
    apply_threads(cmd, a.threads);

    eval::Protocol protocol;
    if (a.protocol == "all-pairs") {
        protocol = eval::Protocol::all_pairs;
    } else if (a.protocol == "first-vs-rest") {
        protocol = eval::Protocol::first_vs_rest;
    } else {
        throw InvalidArgument("unknown protocol: " + a.protocol);
    }

    write_resolved_config(a.out, json{{"command", "report"},
                                      {"data", a.data},
                                      {"matcher", a.matcher},
                                      {"protocol", a.protocol},
                                      {"plot", a.plot},
                                      {"bins", a.bins},
                                      {"threads", thread_count()}});

    const eval::MatcherParams matcher = eval::load_matcher(a.matcher);
    const eval::ScoreSet scores =
        eval::score_distributions(matcher, pipe::load_manifest(a.data), protocol);
    eval::write_scores_csv(fs::path(a.out) / "scores.csv", scores);
    if (a.plot) eval::write_histogram_svg(fs::path(a.out) / "histogram.svg", scores, a.bins);
    std::cout << scores.genuine.size() << " genuine / " << scores.imposter.size()
              << " imposter scores, overlap " << eval::overlap_coefficient(scores, a.bins)
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"palmprint synthesis pipeline"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    GenCorpusArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-corpus", "generate the crease-identity corpus");
    cmd_gen->add_option("--n", gen.n, "number of identities");
    cmd_gen->add_option("--per", gen.per, "captures per identity");
    cmd_gen->add_option("--side", gen.side, "image side length in px");
    cmd_gen->add_option("--warp", gen.warp, "max corner jitter per capture, px");
    cmd_gen->add_option("--texture-amplitude", gen.texture_amplitude, "background texture depth");
    cmd_gen->add_option("--texture-grid", gen.texture_grid, "texture noise grid size");
    cmd_gen->add_option("--quality-bins", gen.quality_bins, "quality label bins");
    cmd_gen->add_option("--seed", gen.seed, "run seed");
    cmd_gen->add_option("--config", gen.config, "JSON config file (flags win)");
    cmd_gen->add_option("--threads", gen.threads, "worker thread count");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();

    TrainArgs train;
    CLI::App* cmd_train = app.add_subcommand("train", "train a model stage");
    cmd_train->add_option("--stage", train.stage, "one | two | matcher")
        ->required()
        ->check(CLI::IsMember({"one", "two", "matcher"}));
    cmd_train->add_option("--data", train.data, "training corpus manifest")->required();
    cmd_train->add_option("--config", train.config, "JSON config file (flags win)");
    CLI::Option* opt_init =
        cmd_train->add_option("--init", train.init, "checkpoint to grow from (stage two)");
    cmd_train->add_option("--resume", train.resume, "checkpoint to resume")->excludes(opt_init);
    cmd_train->add_option("--steps", train.steps, "total optimizer steps");
    cmd_train->add_option("--batch", train.batch, "batch size");
    cmd_train->add_option("--lr", train.lr, "peak learning rate");
    cmd_train->add_option("--lr-min", train.lr_min, "final learning rate");
    cmd_train->add_option("--schedule", train.schedule, "noise schedule: linear | cosine")
        ->check(CLI::IsMember({"linear", "cosine"}));
    cmd_train->add_option("--timesteps", train.timesteps, "diffusion timesteps");
    cmd_train->add_option("--ckpt-every", train.ckpt_every, "checkpoint interval in steps");
    cmd_train->add_option("--seed", train.seed, "run seed");
    cmd_train->add_option("--threads", train.threads, "worker thread count");
    cmd_train->add_option("--out", train.out, "output directory")->required();

    BuildBankArgs bank;
    CLI::App* cmd_bank = app.add_subcommand("build-bank", "estimate the homography bank");
    cmd_bank->add_option("--data", bank.data, "genuine-pair corpus manifest")->required();
    cmd_bank->add_option("--pairs-per-id", bank.pairs_per_id, "consecutive pairs per identity");
    cmd_bank->add_option("--max-pairs", bank.max_pairs, "total pair cap");
    cmd_bank->add_option("--iters", bank.iters, "RANSAC iterations");
    cmd_bank->add_option("--inlier-px", bank.inlier_px, "RANSAC inlier radius, px");
    cmd_bank->add_option("--min-inliers", bank.min_inliers, "acceptance inlier floor");
    cmd_bank->add_option("--max-corner-frac", bank.max_corner_frac,
                         "max corner displacement as width fraction");
    cmd_bank->add_option("--fast-threshold", bank.fast_threshold, "FAST corner threshold");
    cmd_bank->add_option("--seed", bank.seed, "run seed");
    cmd_bank->add_option("--config", bank.config, "JSON config file (flags win)");
    cmd_bank->add_option("--threads", bank.threads, "worker thread count");
    cmd_bank->add_option("--out", bank.out, "output directory")->required();

    SynthesizeArgs synth;
    CLI::App* cmd_synth = app.add_subcommand("synthesize", "build the synthetic corpus");
    cmd_synth->add_option("--s1", synth.s1, "stage-one checkpoint")->required();
    cmd_synth->add_option("--s2", synth.s2, "stage-two checkpoint")->required();
    cmd_synth->add_option("--bank", synth.bank, "homography bank file")->required();
    cmd_synth->add_option("--matcher", synth.matcher, "matcher checkpoint")->required();
    cmd_synth->add_option("--n", synth.n, "number of identities");
    cmd_synth->add_option("--k", synth.k, "renders per identity");
    cmd_synth->add_option("--identity-quality", synth.identity_quality,
                          "stage-one quality token, -1 = highest");
    cmd_synth->add_option("--quality-menu", synth.quality_menu,
                          "render quality tokens, empty = all");
    cmd_synth->add_option("--seed", synth.seed, "run seed");
    cmd_synth->add_option("--config", synth.config, "JSON config file (flags win)");
    cmd_synth->add_option("--threads", synth.threads, "worker thread count");
    cmd_synth->add_option("--out", synth.out, "output directory")->required();

    EvaluateArgs ev;
    CLI::App* cmd_eval = app.add_subcommand("evaluate", "run the recognition utility experiment");
    cmd_eval->add_option("--real-train", ev.real_train, "real training manifest")->required();
    cmd_eval->add_option("--synth", ev.synth, "synthetic training manifest")->required();
    cmd_eval->add_option("--test", ev.tests, "test manifest as name=path, repeatable")
        ->required();
    cmd_eval->add_option("--far", ev.far, "FAR operating point");
    cmd_eval->add_option("--seed", ev.seed, "run seed");
    cmd_eval->add_option("--config", ev.config, "JSON config file (flags win)");
    cmd_eval->add_option("--threads", ev.threads, "worker thread count");
    cmd_eval->add_option("--out", ev.out, "output directory")->required();

    ReportArgs rep;
    CLI::App* cmd_report = app.add_subcommand("report", "score a corpus with a trained matcher");
    cmd_report->add_option("--data", rep.data, "corpus manifest")->required();
    cmd_report->add_option("--matcher", rep.matcher, "matcher checkpoint")->required();
    cmd_report->add_option("--protocol", rep.protocol, "all-pairs | first-vs-rest")
        ->check(CLI::IsMember({"all-pairs", "first-vs-rest"}));
    cmd_report->add_flag("--plot", rep.plot, "also write score histogram SVG");
    cmd_report->add_option("--bins", rep.bins, "histogram bins");
    cmd_report->add_option("--config", rep.config, "JSON config file (flags win)");
    cmd_report->add_option("--threads", rep.threads, "worker thread count");
    cmd_report->add_option("--out", rep.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help on stdout, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_gen->parsed()) return run_gen_corpus(*cmd_gen, gen);
        if (cmd_train->parsed()) return run_train(*cmd_train, train);
        if (cmd_bank->parsed()) return run_build_bank(*cmd_bank, bank);
        if (cmd_synth->parsed()) return run_synthesize(*cmd_synth, synth);
        if (cmd_eval->parsed()) return run_evaluate(*cmd_eval, ev);
        if (cmd_report->parsed()) return run_report(*cmd_report, rep);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
