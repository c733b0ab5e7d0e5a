#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "palmforge/manifest.hpp"
#include "palmforge/matcher.hpp"

namespace palmforge::eval {

// Cosine similarity of unit embeddings, clamped into [-1, 1].
double match_score(const Embedding& a, const Embedding& b);

struct ScoreSet {
    std::vector<double> genuine, imposter;
    std::string protocol_id;
};

enum class Protocol { all_pairs, first_vs_rest };

// Pure pair enumeration over precomputed embeddings, record order preserved.
ScoreSet score_pairs(const std::vector<Embedding>& embeddings,
                     const std::vector<std::int64_t>& ids, Protocol protocol);

ScoreSet score_distributions(const MatcherParams& model, const pipe::DatasetManifest& manifest,
                             Protocol protocol);

struct TarResult {
    double tar = 0.0;
    double threshold = 0.0;
};

// Threshold is the smallest observed imposter score (or +inf) whose FAR is
// within the target; TAR is the genuine fraction at that threshold.
TarResult tar_at_far(const ScoreSet& scores, double far_target);

// Fraction of shared area between the two score histograms.
double overlap_coefficient(const ScoreSet& scores, int bins = 50);

// Top-2 PCA by power iteration: fixed uniform start vector, 200 iterations,
// deflation, sign fixed so each component's largest-magnitude entry is
// positive.
std::vector<std::pair<double, double>> project_2d(const std::vector<Embedding>& embeddings);

struct BootstrapCI {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};
BootstrapCI bootstrap_mean_ci(const std::vector<double>& values, int iters, double confidence,
                              std::uint64_t seed);

struct UtilityRow {
    std::string config;
    int train_identities = 0;
    std::vector<double> tars;
    double average = 0.0;
};

struct UtilityReport {
    std::vector<std::string> test_names;
    std::vector<UtilityRow> rows;
    double far = 0.0;
    std::uint64_t seed = 0;
};

// Trains real-only / synth-only / real+synth matchers and reports
// TAR@far on every test manifest. Train and test identities must not
// overlap within the real namespace.
UtilityReport utility_experiment(
    const pipe::DatasetManifest& real_train, const pipe::DatasetManifest& synth,
    const std::vector<std::pair<std::string, pipe::DatasetManifest>>& tests,
    const MatcherConfig& matcher_cfg, double far_target, std::uint64_t seed);

std::string report_csv(const UtilityReport& report);
void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores);
void write_histogram_svg(const std::filesystem::path& path, const ScoreSet& scores,
                         int bins = 50);

}  // namespace palmforge::eval
