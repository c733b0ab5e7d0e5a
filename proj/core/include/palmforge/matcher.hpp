#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "palmforge/image.hpp"
#include "palmforge/manifest.hpp"
#include "palmforge/nn/denoiser.hpp"

// Recognition matcher: four conv/pool stages, global average pooling, a
// linear embedding layer, and a softmax identity head used only in training.
// Match scores are cosine similarities of the normalized embeddings; the
// embedding norm before normalization doubles as the quality signal.

namespace palmforge::eval {

struct MatcherConfig {
    int image_size = 64;
    int c1 = 8, c2 = 16, c3 = 32, c4 = 64;
    int embed_dim = 64;
    int quality_bins = 3;
    int batch = 16;
    std::int64_t steps = 800;
    double base_lr = 1e-3;
    double lr_min = 1e-5;

    void validate() const;
    bool operator==(const MatcherConfig&) const = default;
};

struct MatcherParams {
    MatcherConfig cfg;
    int n_classes = 0;
    nn::ConvP<float> conv1, conv2, conv3, conv4;
    nn::LinP<float> embed, head;
    std::vector<float> calib;  // quality_bins-1 strictly increasing norm thresholds

    template <class Self, class F>
    static void visit_impl(Self& s, F&& f) {
        f("conv1.w", s.conv1.w);
        f("conv1.b", s.conv1.b);
        f("conv2.w", s.conv2.w);
        f("conv2.b", s.conv2.b);
        f("conv3.w", s.conv3.w);
        f("conv3.b", s.conv3.b);
        f("conv4.w", s.conv4.w);
        f("conv4.b", s.conv4.b);
        f("embed.w", s.embed.w);
        f("embed.b", s.embed.b);
        f("head.w", s.head.w);
        f("head.b", s.head.b);
    }
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, std::forward<F>(f));
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, std::forward<F>(f));
    }
};

struct Embedding {
    std::vector<float> v;  // unit norm
    float pre_norm = 0.0f;
};

MatcherParams init_matcher(const MatcherConfig& cfg, int n_classes, std::uint64_t seed);

Embedding embed_image(const MatcherParams& m, const img::Image& im);
std::vector<Embedding> embed_images(const MatcherParams& m, const std::vector<img::Image>& ims);

// Bucket index from the calibrated norm quantiles; 0 is lowest quality.
int quality_label(const MatcherParams& m, const img::Image& im);

struct MatcherTrainResult {
    MatcherParams model;
    double final_accuracy = 0.0;
    std::vector<double> losses;
};

MatcherTrainResult train_matcher(const std::vector<std::pair<img::Image, std::int64_t>>& data,
                                 const MatcherConfig& cfg, std::uint64_t seed);
MatcherTrainResult train_matcher(const pipe::DatasetManifest& manifest, const MatcherConfig& cfg,
                                 std::uint64_t seed);

void save_matcher(const std::filesystem::path& path, const MatcherParams& m);
MatcherParams load_matcher(const std::filesystem::path& path);

}  // namespace palmforge::eval
