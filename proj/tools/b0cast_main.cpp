#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "b0cast/b0v_io.hpp"
#include "b0cast/fieldmap.hpp"
#include "b0cast/nn/checkpoint.hpp"
#include "b0cast/nn/train.hpp"
#include "b0cast/pipeline.hpp"
#include "b0cast/shim.hpp"

using namespace b0cast;

namespace {

struct CommonOpts {
    std::string config_path;
    std::int64_t seed_override = -1;
    bool deterministic = true;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "run configuration JSON");
    if (config_required) c->required();
    cmd->add_option("--seed", opts.seed_override, "override the config seed");
    cmd->add_flag("--deterministic,!--no-deterministic", opts.deterministic,
                  "bit-reproducible mode (default on)");
    cmd->add_flag("--force", opts.force, "overwrite artifacts from a different config");
}

RunConfig load_config(const CommonOpts& opts) {
    RunConfig cfg = validate_config(opts.config_path);
    if (opts.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
    return cfg;
}

int run_stage(const CommonOpts& opts, Stage stage) {
    set_deterministic_mode(opts.deterministic);
    run_pipeline(load_config(opts), stage, opts.force);
    return 0;
}

int run_estimate_fieldmap(const std::string& input, const std::string& output,
                          const std::string& reliability_out) {
    const ComplexVolume echoes = read_complex_volume(input);
    const FieldMapResult res = estimate_fieldmap(echoes);
    write_volume(res.field, output);
    if (!reliability_out.empty()) write_volume(res.reliability, reliability_out);
    return 0;
}

int run_predict_direct(const std::string& checkpoint, const std::string& b0_init,
                       const std::string& anat_init, const std::string& anat_new,
                       const std::string& output) {
    const nn::UNetParams params = nn::load_checkpoint(checkpoint);
    const Volume3D pred = nn::predict(params, read_volume(b0_init), read_volume(anat_init),
                                      read_volume(anat_new));
    write_volume(pred, output);
    return 0;
}

int run_calibrate_ingest(const std::string& maps_json, const std::string& output) {
    std::ifstream f(maps_json);
    if (!f) throw ConfigError("cannot open maps file: " + maps_json);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("maps file: invalid JSON: " + std::string(e.what()));
    }
    // entries: {"term": "X", "amplitude": -100.0, "path": "map.b0v"}
    std::map<std::string, std::pair<std::vector<FieldMapResult>, std::vector<double>>> by_term;
    for (const auto& e : j) {
        const std::string term = e.at("term").get<std::string>();
        FieldMapResult m;
        m.field = read_volume(e.at("path").get<std::string>());
        m.reliability = Volume3D(m.field.grid, Units::dimensionless, 1.0f);
        m.mask = Mask3D(m.field.grid, true);
        by_term[term].first.push_back(std::move(m));
        by_term[term].second.push_back(e.at("amplitude").get<double>());
    }
    nlohmann::json out;
    for (auto& [term, data] : by_term) {
        const ShimCalibration cal = fit_shim_calibration(data.first, data.second, term);
        out["terms"][term] = {{"coefficient", cal.coefficient},
                              {"residual_rms_hz", cal.residual_rms_hz}};
    }
    std::ofstream of(output);
    if (!of) throw Error("cannot open for writing: " + output);
    of << out.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-to-B0 prediction pipeline"};
    app.require_subcommand(1);

    CommonOpts simulate_opts, calibrate_opts, train_opts, finetune_opts, predict_opts,
        evaluate_opts, sweep_opts, all_opts;

    auto* simulate = app.add_subcommand("simulate-dataset", "synthesize the multi-subject dataset");
    add_common(simulate, simulate_opts);

    auto* calibrate = app.add_subcommand("calibrate-shim",
                                         "fit shim-term coefficients (config mode or --maps)");
    add_common(calibrate, calibrate_opts, false);
    std::string maps_json, calibrate_out = "coefficients.json";
    calibrate->add_option("--maps", maps_json, "JSON list of amplitude-tagged field maps");
    calibrate->add_option("-o,--output", calibrate_out, "coefficients JSON (with --maps)");

    auto* estimate = app.add_subcommand("estimate-fieldmap", "multi-echo B0V -> field map");
    std::string est_in, est_out, est_rel;
    estimate->add_option("-i,--input", est_in, "multi-echo complex B0V")->required();
    estimate->add_option("-o,--output", est_out, "output field B0V")->required();
    estimate->add_option("--reliability", est_rel, "optional reliability B0V");

    auto* train_cmd = app.add_subcommand("train", "general training on the train subjects");
    add_common(train_cmd, train_opts);

    auto* finetune_cmd = app.add_subcommand("finetune", "subject-specific fine-tuning");
    add_common(finetune_cmd, finetune_opts);

    auto* predict_cmd =
        app.add_subcommand("predict", "predict B0 maps (config mode or direct volume mode)");
    add_common(predict_cmd, predict_opts, false);
    std::string ckpt, b0_init, anat_init, anat_new, pred_out;
    predict_cmd->add_option("--checkpoint", ckpt, "checkpoint file (direct mode)");
    predict_cmd->add_option("--b0-init", b0_init, "initial B0 map B0V");
    predict_cmd->add_option("--anat-init", anat_init, "initial anatomy B0V");
    predict_cmd->add_option("--anat-new", anat_new, "moved anatomy B0V");
    predict_cmd->add_option("-o,--output", pred_out, "predicted field B0V");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "four-approach comparison report");
    add_common(evaluate_cmd, evaluate_opts);

    auto* sweep_cmd = app.add_subcommand("sweep-finetune", "epochs and volumes sweeps");
    add_common(sweep_cmd, sweep_opts);

    auto* all_cmd = app.add_subcommand("all", "simulate + calibrate + train + finetune + evaluate");
    add_common(all_cmd, all_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_stage(simulate_opts, Stage::Simulate);
        if (calibrate->parsed()) {
            if (!maps_json.empty()) return run_calibrate_ingest(maps_json, calibrate_out);
            if (calibrate_opts.config_path.empty())
                throw ConfigError("calibrate-shim: provide --config or --maps");
            return run_stage(calibrate_opts, Stage::Calibrate);
        }
        if (estimate->parsed()) return run_estimate_fieldmap(est_in, est_out, est_rel);
        if (train_cmd->parsed()) return run_stage(train_opts, Stage::Train);
        if (finetune_cmd->parsed()) return run_stage(finetune_opts, Stage::Finetune);
        if (predict_cmd->parsed()) {
            if (!ckpt.empty())
                return run_predict_direct(ckpt, b0_init, anat_init, anat_new, pred_out);
            if (predict_opts.config_path.empty())
                throw ConfigError("predict: provide --checkpoint inputs or --config");
            return run_stage(predict_opts, Stage::Predict);
        }
        if (evaluate_cmd->parsed()) return run_stage(evaluate_opts, Stage::Evaluate);
        if (sweep_cmd->parsed()) {
            set_deterministic_mode(sweep_opts.deterministic);
            run_sweep_finetune(load_config(sweep_opts), sweep_opts.force);
            return 0;
        }
        if (all_cmd->parsed()) return run_stage(all_opts, Stage::All);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const PrerequisiteError& e) {
        std::cerr << "missing prerequisite: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
