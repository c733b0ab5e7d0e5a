#include "palmforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "palmforge/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace palmforge::ckpt {

namespace {
constexpr char kMagic[5] = {'P', 'F', 'C', 'K', '1'};
}

void write_container(
    const std::filesystem::path& path, nlohmann::json header,
    const std::vector<std::pair<std::string, const std::vector<float>*>>& tensors) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, data] : tensors)
        list.push_back({{"name", name}, {"numel", data->size()}});
    header["tensors"] = std::move(list);

    const std::string hdr = header.dump();
    if (hdr.size() > 0xFFFFFFFFu) throw IoError("checkpoint header too large");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(hdr.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    for (const auto& [name, data] : tensors)
        out.write(reinterpret_cast<const char*>(data->data()),
                  static_cast<std::streamsize>(data->size() * sizeof(float)));
    out.flush();
    if (!out) throw IoError("short write on checkpoint: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path.string());

    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path.string());

    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw IoError("truncated checkpoint header: " + path.string());
    std::string hdr(len, '\0');
    in.read(hdr.data(), len);
    if (!in) throw IoError("truncated checkpoint header: " + path.string());

    Container c;
    c.header = nlohmann::json::parse(hdr, nullptr, false);
    if (c.header.is_discarded()) throw IoError("corrupt checkpoint header: " + path.string());

    for (const auto& t : c.header.at("tensors")) {
        NamedTensor nt;
        nt.name = t.at("name").get<std::string>();
        const std::size_t numel = t.at("numel").get<std::size_t>();
        nt.data.resize(numel);
        in.read(reinterpret_cast<char*>(nt.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw IoError("tensor payload short for '" + nt.name + "': " + path.string());
        c.tensors.push_back(std::move(nt));
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw IoError("trailing bytes after declared tensors: " + path.string());
    return c;
}

nlohmann::json config_to_json(const nn::DenoiserConfig& cfg) {
    return {{"image_size", cfg.image_size},
            {"c1", cfg.c1},
            {"c2", cfg.c2},
            {"c3", cfg.c3},
            {"emb_dim", cfg.emb_dim},
            {"quality_tokens", cfg.quality_tokens},
            {"groups", cfg.groups},
            {"timesteps", cfg.timesteps},
            {"control", cfg.control}};
}

nn::DenoiserConfig config_from_json(const nlohmann::json& j) {
    nn::DenoiserConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.c1 = j.at("c1").get<int>();
    cfg.c2 = j.at("c2").get<int>();
    cfg.c3 = j.at("c3").get<int>();
    cfg.emb_dim = j.at("emb_dim").get<int>();
    cfg.quality_tokens = j.at("quality_tokens").get<int>();
    cfg.groups = j.at("groups").get<int>();
    cfg.timesteps = j.at("timesteps").get<int>();
    cfg.control = j.at("control").get<bool>();
    cfg.validate();
    return cfg;
}

void save_denoiser(const std::filesystem::path& path, const TrainState& state) {
    nlohmann::json header = {{"kind", "denoiser"},
                             {"arch", config_to_json(state.params.cfg)},
                             {"step", state.step},
                             {"schedule", state.schedule},
                             {"rng", {{"seed", state.seed}}}};

    std::vector<std::pair<std::string, const std::vector<float>*>> tensors;
    state.params.visit([&tensors](const char* name, const std::vector<float>& v) {
        tensors.emplace_back(name, &v);
    });
    if (state.has_adam) {
        header["optimizer"] = {{"step", state.adam.step},
                               {"base_lr", state.adam.base_lr},
                               {"total_steps", state.adam.total_steps},
                               {"lr_min", state.adam.lr_min}};
        for (std::size_t k = 0; k < state.adam.m.size(); ++k) {
            tensors.emplace_back("adam.m." + std::to_string(k), &state.adam.m[k]);
            tensors.emplace_back("adam.v." + std::to_string(k), &state.adam.v[k]);
        }
    }
    write_container(path, std::move(header), tensors);
}

TrainState load_denoiser(const std::filesystem::path& path) {
    Container c = read_container(path);
    if (c.header.value("kind", "") != "denoiser")
        throw IoError("checkpoint is not a denoiser: " + path.string());

    TrainState state;
    state.params.cfg = config_from_json(c.header.at("arch"));
    nn::allocate_params(state.params);
    state.step = c.header.at("step").get<std::int64_t>();
    state.schedule = c.header.at("schedule").get<std::string>();
    state.seed = c.header.at("rng").at("seed").get<std::uint64_t>();

    std::size_t cursor = 0;
    auto take = [&](const std::string& name, std::vector<float>& dst) {
        if (cursor >= c.tensors.size())
            throw IoError("checkpoint missing tensor '" + name + "': " + path.string());
        auto& t = c.tensors[cursor++];
        if (t.name != name)
            throw IoError("checkpoint tensor order mismatch, expected '" + name + "' got '" +
                          t.name + "'");
        if (t.data.size() != dst.size())
            throw IoError("checkpoint tensor '" + name + "' has wrong element count");
        dst = std::move(t.data);
    };
    state.params.visit(
        [&take](const char* name, std::vector<float>& v) { take(name, v); });

    if (c.header.contains("optimizer")) {
        const auto& opt = c.header.at("optimizer");
        state.has_adam = true;
        state.adam = nn::make_adam_state(state.params, opt.at("base_lr").get<double>(),
                                         opt.at("total_steps").get<std::int64_t>(),
                                         opt.at("lr_min").get<double>());
        state.adam.step = opt.at("step").get<std::int64_t>();
        for (std::size_t k = 0; k < state.adam.m.size(); ++k) {
            take("adam.m." + std::to_string(k), state.adam.m[k]);
            take("adam.v." + std::to_string(k), state.adam.v[k]);
        }
    }
    if (cursor != c.tensors.size())
        throw IoError("checkpoint has extra tensors: " + path.string());
    return state;
}

}  // namespace palmforge::ckpt
