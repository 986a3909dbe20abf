#include "b0cast/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace b0cast {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key '" + scope + it.key() + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: malformed value for '" + scope + key + "'");
    }
}

void take_vec3(const json& j, const char* key, Vec3& out, const std::string& scope) {
    if (!j.contains(key)) return;
    std::vector<double> v;
    take(j, key, v, scope);
    if (v.size() != 3) throw ConfigError("config: '" + scope + key + "' must have 3 entries");
    out = {v[0], v[1], v[2]};
}

void take_dims3(const json& j, const char* key, Dims3& out, const std::string& scope) {
    if (!j.contains(key)) return;
    std::vector<int> v;
    take(j, key, v, scope);
    if (v.size() != 3) throw ConfigError("config: '" + scope + key + "' must have 3 entries");
    out = {v[0], v[1], v[2]};
}

} // namespace

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"seed", "outdir", "grid", "phantom", "scene", "poses", "subjects",
                         "navigator", "gre", "train", "finetune", "augmentation", "calibration",
                         "sweep"},
                        "");

    RunConfig c;
    if (!j.contains("seed")) throw ConfigError("config: missing required key 'seed'");
    if (!j.contains("outdir")) throw ConfigError("config: missing required key 'outdir'");
    take(j, "seed", c.seed, "");
    std::string outdir;
    take(j, "outdir", outdir, "");
    c.outdir = outdir;

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        reject_unknown_keys(g, {"dims", "fov_mm"}, "grid.");
        take_dims3(g, "dims", c.grid_dims, "grid.");
        take_vec3(g, "fov_mm", c.fov_mm, "grid.");
    }
    if (j.contains("phantom")) {
        const json& g = j.at("phantom");
        reject_unknown_keys(g,
                            {"semi_axes_mm", "tissue_chi_ppm", "air_chi_ppm", "mask_erosion_mm",
                             "cavity_margin_mm"},
                            "phantom.");
        take_vec3(g, "semi_axes_mm", c.phantom_semi_axes_mm, "phantom.");
        take(g, "tissue_chi_ppm", c.tissue_chi_ppm, "phantom.");
        take(g, "air_chi_ppm", c.air_chi_ppm, "phantom.");
        take(g, "mask_erosion_mm", c.mask_erosion_mm, "phantom.");
        take(g, "cavity_margin_mm", c.cavity_margin_mm, "phantom.");
    }
    if (j.contains("scene")) {
        const json& g = j.at("scene");
        reject_unknown_keys(g, {"b0_tesla"}, "scene.");
        take(g, "b0_tesla", c.b0_tesla, "scene.");
    }
    if (j.contains("poses")) {
        const json& g = j.at("poses");
        reject_unknown_keys(g, {"count", "max_translation_mm", "max_rotation_deg"}, "poses.");
        take(g, "count", c.poses_per_subject, "poses.");
        take(g, "max_translation_mm", c.pose_max_translation_mm, "poses.");
        take(g, "max_rotation_deg", c.pose_max_rotation_deg, "poses.");
    }
    if (j.contains("subjects")) {
        const json& g = j.at("subjects");
        reject_unknown_keys(g, {"train", "test"}, "subjects.");
        take(g, "train", c.train_subjects, "subjects.");
        take(g, "test", c.test_subjects, "subjects.");
    }
    if (j.contains("navigator")) {
        const json& g = j.at("navigator");
        reject_unknown_keys(g, {"factor", "noise_sigma", "echoes_ms"}, "navigator.");
        take(g, "factor", c.navigator_factor, "navigator.");
        take(g, "noise_sigma", c.navigator_noise_sigma, "navigator.");
        take(g, "echoes_ms", c.navigator_echoes_ms, "navigator.");
    }
    if (j.contains("gre")) {
        const json& g = j.at("gre");
        reject_unknown_keys(g, {"echoes_ms", "noise_sigma"}, "gre.");
        take(g, "echoes_ms", c.gre_echoes_ms, "gre.");
        take(g, "noise_sigma", c.gre_noise_sigma, "gre.");
    }
    if (j.contains("train")) {
        const json& g = j.at("train");
        reject_unknown_keys(
            g, {"lr", "weight_decay", "epochs", "batch", "augment", "base_channels", "mask_loss"},
            "train.");
        take(g, "lr", c.train_lr, "train.");
        take(g, "weight_decay", c.train_weight_decay, "train.");
        take(g, "epochs", c.train_epochs, "train.");
        take(g, "batch", c.train_batch, "train.");
        take(g, "augment", c.train_augment, "train.");
        take(g, "base_channels", c.base_channels, "train.");
        take(g, "mask_loss", c.mask_loss, "train.");
    }
    if (j.contains("finetune")) {
        const json& g = j.at("finetune");
        reject_unknown_keys(g, {"lr", "weight_decay", "epochs", "positions"}, "finetune.");
        take(g, "lr", c.finetune_lr, "finetune.");
        take(g, "weight_decay", c.finetune_weight_decay, "finetune.");
        take(g, "epochs", c.finetune_epochs, "finetune.");
        take(g, "positions", c.finetune_positions, "finetune.");
    }
    if (j.contains("augmentation")) {
        const json& g = j.at("augmentation");
        reject_unknown_keys(g, {"range_order1", "range_order2"}, "augmentation.");
        take(g, "range_order1", c.augment_range_order1, "augmentation.");
        take(g, "range_order2", c.augment_range_order2, "augmentation.");
    }
    if (j.contains("calibration")) {
        const json& g = j.at("calibration");
        reject_unknown_keys(g, {"amplitudes", "noise_sigma_hz"}, "calibration.");
        take(g, "amplitudes", c.calibration_amplitudes, "calibration.");
        take(g, "noise_sigma_hz", c.calibration_noise_sigma_hz, "calibration.");
    }
    if (j.contains("sweep")) {
        const json& g = j.at("sweep");
        reject_unknown_keys(g, {"epochs", "volumes"}, "sweep.");
        take(g, "epochs", c.sweep_epochs, "sweep.");
        take(g, "volumes", c.sweep_volumes, "sweep.");
    }

    // sanity/unit checks
    for (int a = 0; a < 3; ++a) {
        if (c.grid_dims[a] < 8) throw ConfigError("config: grid.dims entries must be >= 8");
        if (!(c.fov_mm[a] > 0.0)) throw ConfigError("config: grid.fov_mm entries must be positive");
    }
    if (!(c.train_lr >= 0.0)) throw ConfigError("config: train.lr must be non-negative");
    if (!(c.finetune_lr >= 0.0)) throw ConfigError("config: finetune.lr must be non-negative");
    if (!(c.train_weight_decay >= 0.0) || !(c.finetune_weight_decay >= 0.0))
        throw ConfigError("config: weight_decay must be non-negative");
    if (c.train_epochs < 0 || c.finetune_epochs < 0)
        throw ConfigError("config: epochs must be non-negative");
    if (c.train_batch < 1) throw ConfigError("config: train.batch must be >= 1");
    if (c.poses_per_subject < 1) throw ConfigError("config: poses.count must be >= 1");
    if (c.train_subjects < 1 || c.test_subjects < 1)
        throw ConfigError("config: subjects.train and subjects.test must be >= 1");
    if (c.navigator_factor < 1) throw ConfigError("config: navigator.factor must be >= 1");
    if (c.navigator_noise_sigma < 0.0 || c.gre_noise_sigma < 0.0 ||
        c.calibration_noise_sigma_hz < 0.0)
        throw ConfigError("config: noise sigmas must be non-negative");
    if (c.navigator_echoes_ms.size() != 2)
        throw ConfigError("config: navigator.echoes_ms must list exactly 2 echoes");
    if (c.gre_echoes_ms.size() < 2)
        throw ConfigError("config: gre.echoes_ms must list at least 2 echoes");
    if (c.finetune_positions < 1 || c.finetune_positions >= c.poses_per_subject)
        throw ConfigError("config: finetune.positions must be in [1, poses.count)");
    if (c.augment_range_order1 < 0.0 || c.augment_range_order2 < 0.0)
        throw ConfigError("config: augmentation ranges must be non-negative");
    for (int e : c.sweep_epochs)
        if (e < 0) throw ConfigError("config: sweep.epochs entries must be >= 0");
    for (int v : c.sweep_volumes)
        if (v < 1 || v > c.finetune_positions)
            throw ConfigError("config: sweep.volumes entries must be in [1, finetune.positions]");
    if (c.base_channels < 1) throw ConfigError("config: train.base_channels must be >= 1");
    if (c.outdir.empty()) throw ConfigError("config: outdir must not be empty");
    return c;
}

RunConfig validate_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["outdir"] = c.outdir.string();
    j["grid"] = {{"dims", {c.grid_dims[0], c.grid_dims[1], c.grid_dims[2]}},
                 {"fov_mm", {c.fov_mm[0], c.fov_mm[1], c.fov_mm[2]}}};
    j["phantom"] = {{"semi_axes_mm",
                     {c.phantom_semi_axes_mm[0], c.phantom_semi_axes_mm[1], c.phantom_semi_axes_mm[2]}},
                    {"tissue_chi_ppm", c.tissue_chi_ppm},
                    {"air_chi_ppm", c.air_chi_ppm},
                    {"mask_erosion_mm", c.mask_erosion_mm},
                    {"cavity_margin_mm", c.cavity_margin_mm}};
    j["scene"] = {{"b0_tesla", c.b0_tesla}};
    j["poses"] = {{"count", c.poses_per_subject},
                  {"max_translation_mm", c.pose_max_translation_mm},
                  {"max_rotation_deg", c.pose_max_rotation_deg}};
    j["subjects"] = {{"train", c.train_subjects}, {"test", c.test_subjects}};
    j["navigator"] = {{"factor", c.navigator_factor},
                      {"noise_sigma", c.navigator_noise_sigma},
                      {"echoes_ms", c.navigator_echoes_ms}};
    j["gre"] = {{"echoes_ms", c.gre_echoes_ms}, {"noise_sigma", c.gre_noise_sigma}};
    j["train"] = {{"lr", c.train_lr},
                  {"weight_decay", c.train_weight_decay},
                  {"epochs", c.train_epochs},
                  {"batch", c.train_batch},
                  {"augment", c.train_augment},
                  {"base_channels", c.base_channels},
                  {"mask_loss", c.mask_loss}};
    j["finetune"] = {{"lr", c.finetune_lr},
                     {"weight_decay", c.finetune_weight_decay},
                     {"epochs", c.finetune_epochs},
                     {"positions", c.finetune_positions}};
    j["augmentation"] = {{"range_order1", c.augment_range_order1},
                         {"range_order2", c.augment_range_order2}};
    j["calibration"] = {{"amplitudes", c.calibration_amplitudes},
                        {"noise_sigma_hz", c.calibration_noise_sigma_hz}};
    j["sweep"] = {{"epochs", c.sweep_epochs}, {"volumes", c.sweep_volumes}};
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = config_to_json_text(cfg);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace b0cast
