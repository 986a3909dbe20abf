#include "b0cast/nn/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace b0cast::nn {

using nlohmann::json;

namespace {

constexpr double kB0NormalizationHz = 100.0;

json config_to_json(const UNetConfig& c) {
    return {{"levels", c.levels},
            {"kernel", c.kernel},
            {"base_channels", c.base_channels},
            {"in_channels", c.in_channels},
            {"out_channels", c.out_channels},
            {"leaky_slope", c.leaky_slope}};
}

UNetConfig config_from_json(const json& j) {
    UNetConfig c;
    c.levels = j.at("levels").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<float>();
    return c;
}

} // namespace

void save_checkpoint(const UNetParams& params, const std::filesystem::path& path) {
    params.check_finite("save_checkpoint");
    json h;
    h["magic"] = "B0NN1";
    h["config"] = config_to_json(params.config);
    h["channel_schedule"] = params.config.channel_schedule();
    h["decoder_order"] = "concat-tconv-tconv-upsample";
    h["normalization"] = {{"b0_scale_hz", kB0NormalizationHz}, {"anat", "per-volume max"}};
    h["seed"] = params.seed;
    h["epoch"] = params.epoch;
    json layers = json::array();
    for (const auto& l : params.layers)
        layers.push_back({{"name", l.name},
                          {"kind", l.kind == LayerKind::Conv ? "conv" : "tconv"},
                          {"in_ch", l.in_ch},
                          {"out_ch", l.out_ch},
                          {"kernel", l.kernel},
                          {"weight_count", l.weight.size()},
                          {"bias_count", l.bias.size()}});
    h["layers"] = layers;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << h.dump() << '\n';
    for (const auto& l : params.layers) {
        f.write(reinterpret_cast<const char*>(l.weight.data()),
                static_cast<std::streamsize>(l.weight.size() * sizeof(float)));
        f.write(reinterpret_cast<const char*>(l.bias.data()),
                static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
    }
    if (!f) throw Error("write failed: " + path.string());
}

UNetParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ParseError("checkpoint: cannot read header line");
    json h;
    try {
        h = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError("checkpoint: invalid JSON header: " + std::string(e.what()));
    }
    if (h.value("magic", "") != std::string("B0NN1"))
        throw ParseError("checkpoint: bad field 'magic' in " + path.string());

    // rebuild the layer table from the config, then overwrite the payload
    UNetParams params = build_unet(config_from_json(h.at("config")), h.at("seed").get<std::uint64_t>());
    params.epoch = h.at("epoch").get<int>();

    const json& layers = h.at("layers");
    if (layers.size() != params.layers.size())
        throw IntegrityError("checkpoint: layer count mismatch in " + path.string());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& l = params.layers[i];
        const json& jl = layers[i];
        if (jl.at("name").get<std::string>() != l.name ||
            jl.at("weight_count").get<std::size_t>() != l.weight.size() ||
            jl.at("bias_count").get<std::size_t>() != l.bias.size())
            throw IntegrityError("checkpoint: layer table mismatch at '" + l.name + "'");
        f.read(reinterpret_cast<char*>(l.weight.data()),
               static_cast<std::streamsize>(l.weight.size() * sizeof(float)));
        f.read(reinterpret_cast<char*>(l.bias.data()),
               static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
        if (!f) throw IntegrityError("checkpoint: truncated payload in " + path.string());
    }
    char probe;
    if (f.read(&probe, 1); f.gcount() != 0)
        throw IntegrityError("checkpoint: trailing bytes after payload in " + path.string());
    params.reset_adam();
    params.check_finite("load_checkpoint");
    return params;
}

} // namespace b0cast::nn
