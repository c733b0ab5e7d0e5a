#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "palmforge/nn/adam.hpp"
#include "palmforge/nn/denoiser.hpp"

// Container layout: "PFCK1", u32 little-endian header length, JSON header,
// then one little-endian f32 payload per header-declared tensor, in order.

namespace palmforge::ckpt {

struct NamedTensor {
    std::string name;
    std::vector<float> data;
};

struct Container {
    nlohmann::json header;
    std::vector<NamedTensor> tensors;
};

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, const std::vector<float>*>>& tensors);
Container read_container(const std::filesystem::path& path);

nlohmann::json config_to_json(const nn::DenoiserConfig& cfg);
nn::DenoiserConfig config_from_json(const nlohmann::json& j);

// Everything needed to continue a training run exactly where it stopped.
struct TrainState {
    nn::DenoiserParams<float> params;
    nn::AdamState<float> adam;
    bool has_adam = false;
    std::int64_t step = 0;
    std::string schedule = "linear";
    std::uint64_t seed = 0;
};

void save_denoiser(const std::filesystem::path& path, const TrainState& state);
TrainState load_denoiser(const std::filesystem::path& path);

}  // namespace palmforge::ckpt
