#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "palmforge/checkpoint.hpp"
#include "palmforge/image.hpp"
#include "palmforge/nn/denoiser.hpp"

namespace palmforge::diff {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_from_string(const std::string& s);

struct NoiseSchedule {
    int timesteps = 0;
    std::vector<double> betas, alphas, alpha_bars;
};

// linear: beta linearly spaced over [1e-4, 0.02] scaled by 1000/T;
// cosine: betas from the cos^2 alpha-bar curve (s = 0.008), clipped to 0.999.
// Either way alpha_bars is the exact running product of the stored alphas.
NoiseSchedule make_schedule(ScheduleKind kind, int timesteps);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
img::Image forward_noise(const img::Image& x0, int t, const img::Image& eps,
                         const NoiseSchedule& sched);

struct TrainExample {
    img::Image x0;
    img::Image control;  // zero-size when unconditioned
    int quality = 1;
};
using TrainSet = std::vector<TrainExample>;

struct TrainRunConfig {
    ScheduleKind schedule = ScheduleKind::linear;
    nn::DenoiserConfig arch;
    int batch = 8;
    std::int64_t total_steps = 2000;
    double base_lr = 1e-3;
    double lr_min = 1e-5;
    std::uint64_t seed = 1;
    int stage = 1;
    std::int64_t ckpt_every = 500;
    std::filesystem::path out_dir;  // empty: no checkpoint or loss files written

    void validate() const;
};

struct TrainResult {
    ckpt::TrainState state;
    std::vector<double> losses;  // one entry per step executed in this call
    std::filesystem::path model_path;
};

// Stage one trains from scratch (or resumes); stage two takes the stage-one
// model and grows the control branch, or resumes a stage-two checkpoint.
// Given identical config and seed, resumed and uninterrupted runs agree bit
// for bit at every step.
TrainResult train(const TrainRunConfig& cfg, const TrainSet& data,
                  const std::optional<ckpt::TrainState>& model_in);

// One reverse-diffusion chain: eps_fn is called exactly T times; the result
// is clamped to [0,1] once at the end.
using EpsFn = std::function<std::vector<float>(const std::vector<float>& x, int t)>;
std::vector<float> sample_chain(const EpsFn& eps_fn, const NoiseSchedule& sched, int side,
                                std::uint64_t seed);

std::vector<img::Image> sample(const nn::DenoiserParams<float>& model, const NoiseSchedule& sched,
                               int quality, const img::BinaryImage* control, std::uint64_t seed,
                               int n);

}  // namespace palmforge::diff
