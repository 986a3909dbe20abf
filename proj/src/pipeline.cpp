#include "b0cast/pipeline.hpp"

#include <fstream>

#include <json.hpp>

#include "b0cast/b0v_io.hpp"
#include "b0cast/dataset.hpp"
#include "b0cast/eval.hpp"
#include "b0cast/nn/checkpoint.hpp"
#include "b0cast/nn/train.hpp"
#include "b0cast/phantom.hpp"
#include "b0cast/shim.hpp"
#include "b0cast/signal_sim.hpp"

extern "C" void openblas_set_num_threads(int);

namespace b0cast {

using nlohmann::json;
namespace fs = std::filesystem;

Stage stage_from_string(const std::string& s) {
    if (s == "simulate") return Stage::Simulate;
    if (s == "calibrate") return Stage::Calibrate;
    if (s == "train") return Stage::Train;
    if (s == "finetune") return Stage::Finetune;
    if (s == "predict") return Stage::Predict;
    if (s == "evaluate") return Stage::Evaluate;
    if (s == "all") return Stage::All;
    throw ConfigError("unknown stage '" + s + "'");
}

void set_deterministic_mode(bool on) {
    openblas_set_num_threads(on ? 1 : 0);
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void write_stage_manifest(const fs::path& dir, const std::string& stage, const RunConfig& cfg) {
    json j;
    j["stage"] = stage;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["code_version"] = kCodeVersion;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw Error("cannot write manifest in " + dir.string());
    f << j.dump(2) << '\n';
}

void guard_stage_dir(const fs::path& dir, const RunConfig& cfg, bool force) {
    const fs::path manifest = dir / "manifest.json";
    if (!fs::exists(manifest)) {
        fs::create_directories(dir);
        return;
    }
    std::ifstream f(manifest);
    json j;
    try {
        f >> j;
    } catch (const json::exception&) {
        throw IntegrityError("corrupt stage manifest: " + manifest.string());
    }
    if (j.value("config_hash", "") != config_hash(cfg) && !force)
        throw ConfigError("stage artifacts in " + dir.string() +
                          " were produced under a different config; re-run with --force to overwrite");
}

struct PipelineLock {
    fs::path path;
    explicit PipelineLock(const fs::path& outdir, bool force) : path(outdir / ".lock") {
        fs::create_directories(outdir);
        if (fs::exists(path) && !force)
            throw Error("pipeline lock present in " + outdir.string() +
                        " (another run active or stale); use --force");
        std::ofstream f(path);
        f << "locked\n";
    }
    ~PipelineLock() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

PhantomSpec phantom_spec_from_config(const RunConfig& cfg) {
    PhantomSpec spec = PhantomSpec::desk_default(cfg.grid());
    spec.semi_axes_mm = cfg.phantom_semi_axes_mm;
    spec.cavities = proportional_cavities(spec.semi_axes_mm);
    spec.tissue_chi_ppm = cfg.tissue_chi_ppm;
    spec.air_chi_ppm = cfg.air_chi_ppm;
    spec.mask_erosion_mm = cfg.mask_erosion_mm;
    spec.cavity_margin_mm = cfg.cavity_margin_mm;
    return spec;
}

RigidPose random_pose(Rng& rng, double max_t, double max_r) {
    RigidPose p;
    for (int a = 0; a < 3; ++a) p.t_mm[a] = rng.uniform(-max_t, max_t);
    for (int a = 0; a < 3; ++a) p.r_deg[a] = rng.uniform(-max_r, max_r);
    return p;
}

void simulate_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "dataset";
    guard_stage_dir(root, cfg, force);

    FieldScene scene;
    scene.b0_tesla = cfg.b0_tesla;

    DatasetManifest manifest;
    manifest.seed = cfg.seed;
    manifest.config_hash = config_hash(cfg);
    manifest.code_version = kCodeVersion;
    manifest.dims = cfg.grid_dims;

    const int total = cfg.train_subjects + cfg.test_subjects;
    for (int s = 0; s < total; ++s) {
        const bool is_test = s >= cfg.train_subjects;
        SubjectEntry subject;
        subject.id = (is_test ? "test_" : "train_") +
                     std::to_string(is_test ? s - cfg.train_subjects : s);
        subject.is_test = is_test;

        const std::uint64_t subj_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
        const Phantom phantom = make_phantom(phantom_spec_from_config(cfg), derive_seed(subj_seed, 1));
        Rng pose_rng(derive_seed(subj_seed, 2));

        for (int pos = 0; pos < cfg.poses_per_subject; ++pos) {
            RigidPose pose; // position 0 is the initial acquisition
            if (pos > 0)
                pose = random_pose(pose_rng, cfg.pose_max_translation_mm,
                                   cfg.pose_max_rotation_deg);
            const SceneResult sr = scene_at_pose(phantom, pose, scene, cfg.air_chi_ppm);

            Rng nav_rng(derive_seed(subj_seed, 100 + static_cast<std::uint64_t>(pos)));
            const Volume3D nav = emulate_navigator(sr.gt_field, sr.anat,
                                                   {cfg.navigator_factor, cfg.navigator_factor,
                                                    cfg.navigator_factor},
                                                   cfg.navigator_noise_sigma,
                                                   cfg.navigator_echoes_ms, nav_rng);

            PositionEntry entry;
            entry.index = pos;
            entry.pose = pose;
            entry.dir = "pos_" + std::to_string(pos);
            const fs::path dir = root / subject.id / entry.dir;
            fs::create_directories(dir);
            write_volume(sr.anat, dir / "anat.b0v");
            write_volume(sr.gt_field, dir / "field_gt.b0v");
            write_volume(mask_to_volume(sr.mask), dir / "mask.b0v");
            write_volume(nav, dir / "nav_field.b0v");
            write_poses({pose}, dir / "pose.json");
            subject.positions.push_back(std::move(entry));
        }
        manifest.subjects.push_back(std::move(subject));
    }
    write_dataset_manifest(manifest, root / "dataset_manifest.json");
    write_stage_manifest(root, "simulate", cfg);
}

void calibrate_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "calibration";
    guard_stage_dir(root, cfg, force);

    // spherical phantom, as in the shim characterization experiment
    PhantomSpec spec = phantom_spec_from_config(cfg);
    const double r = 0.32 * std::min({cfg.fov_mm[0], cfg.fov_mm[1], cfg.fov_mm[2]});
    spec.semi_axes_mm = {r, r, r};
    spec.cavities.clear();
    spec.axis_jitter = 0.0;
    spec.cavity_pos_jitter_mm = 0.0;
    spec.cavity_radius_jitter = 0.0;
    const Phantom sphere = make_phantom(spec, derive_seed(cfg.seed, 0xCA11B));

    FieldScene scene;
    scene.b0_tesla = cfg.b0_tesla;
    const SceneResult initial = scene_at_pose(sphere, RigidPose{}, scene, cfg.air_chi_ppm);
    const ShimBasis basis = sh_basis(cfg.grid(), cfg.grid().center());

    Rng noise_rng(derive_seed(cfg.seed, 0xCA11));
    json terms;
    for (std::size_t t = 0; t < kShimTerms.size(); ++t) {
        std::vector<FieldMapResult> maps;
        for (double amp : cfg.calibration_amplitudes) {
            FieldMapResult m;
            m.field = initial.gt_field;
            for (std::size_t i = 0; i < m.field.data.size(); ++i) {
                double v = m.field.data[i] + amp * basis.fields[t].data[i];
                if (cfg.calibration_noise_sigma_hz > 0.0)
                    v += cfg.calibration_noise_sigma_hz * noise_rng.normal();
                m.field.data[i] = static_cast<float>(v);
            }
            m.reliability = Volume3D(cfg.grid(), Units::dimensionless, 1.0f);
            m.mask = initial.mask;
            maps.push_back(std::move(m));
        }
        const ShimCalibration cal =
            fit_shim_calibration(maps, cfg.calibration_amplitudes, kShimTerms[t]);
        terms[kShimTerms[t]] = {{"coefficient", cal.coefficient},
                                {"residual_rms_hz", cal.residual_rms_hz}};
    }
    json out;
    out["amplitudes_uT_per_m_n"] = cfg.calibration_amplitudes;
    out["terms"] = terms;
    std::ofstream f(root / "coefficients.json");
    if (!f) throw Error("cannot write coefficients.json");
    f << out.dump(2) << '\n';
    write_stage_manifest(root, "calibrate", cfg);
}

DatasetManifest require_dataset(const RunConfig& cfg) {
    const fs::path manifest = cfg.outdir / "dataset" / "dataset_manifest.json";
    if (!fs::exists(manifest))
        throw PrerequisiteError("dataset manifest missing: " + manifest.string() +
                                "; run 'simulate' first");
    return read_dataset_manifest(manifest);
}

nn::UNetParams require_general_checkpoint(const RunConfig& cfg) {
    const fs::path ckpt = cfg.outdir / "train" / "checkpoint.b0nn";
    if (!fs::exists(ckpt))
        throw PrerequisiteError("general checkpoint missing: " + ckpt.string() +
                                "; run 'train' first");
    return nn::load_checkpoint(ckpt);
}

nn::UNetConfig unet_config_from(const RunConfig& cfg) {
    nn::UNetConfig uc;
    uc.base_channels = cfg.base_channels;
    return uc;
}

nn::TrainHyper train_hyper_from(const RunConfig& cfg) {
    nn::TrainHyper h;
    h.adam.lr = cfg.train_lr;
    h.adam.weight_decay = cfg.train_weight_decay;
    h.epochs = cfg.train_epochs;
    h.batch = cfg.train_batch;
    h.augment = cfg.train_augment;
    h.augment_range_order1 = cfg.augment_range_order1;
    h.augment_range_order2 = cfg.augment_range_order2;
    h.mask_loss = cfg.mask_loss;
    h.seed = derive_seed(cfg.seed, 0x10011);
    return h;
}

nn::TrainHyper finetune_hyper_from(const RunConfig& cfg, std::uint64_t subj_seed) {
    nn::TrainHyper h;
    h.adam.lr = cfg.finetune_lr;
    h.adam.weight_decay = cfg.finetune_weight_decay;
    h.epochs = cfg.finetune_epochs;
    h.batch = cfg.train_batch;
    h.augment = cfg.train_augment;
    h.augment_range_order1 = cfg.augment_range_order1;
    h.augment_range_order2 = cfg.augment_range_order2;
    h.mask_loss = cfg.mask_loss;
    h.seed = derive_seed(subj_seed, 3);
    return h;
}

std::vector<int> finetune_positions(const RunConfig& cfg) {
    std::vector<int> idx;
    for (int i = 1; i <= cfg.finetune_positions; ++i) idx.push_back(i);
    return idx;
}

std::vector<int> eval_positions(const RunConfig& cfg) {
    std::vector<int> idx;
    for (int i = cfg.finetune_positions + 1; i < cfg.poses_per_subject; ++i) idx.push_back(i);
    return idx;
}

void train_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "train";
    guard_stage_dir(root, cfg, force);
    const DatasetManifest manifest = require_dataset(cfg);
    const fs::path dataset_root = cfg.outdir / "dataset";

    std::vector<nn::TrainingInstance> instances;
    for (const SubjectEntry* subj : manifest.train_subjects()) {
        auto subj_instances = build_instances(dataset_root, *subj);
        for (auto& inst : subj_instances) instances.push_back(std::move(inst));
    }
    if (instances.empty()) throw PrerequisiteError("train: no training instances in dataset");

    const ShimBasis basis = sh_basis(cfg.grid(), cfg.grid().center());
    nn::TrainResult result;
    nn::UNetParams params =
        nn::train(instances, unet_config_from(cfg), &basis, train_hyper_from(cfg),
                  derive_seed(cfg.seed, 0x7e41), &result);

    nn::save_checkpoint(params, root / "checkpoint.b0nn");
    std::ofstream loss(root / "loss.csv");
    loss << "epoch,mse\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        loss << (e + 1) << ',' << result.epoch_loss[e] << '\n';
    write_stage_manifest(root, "train", cfg);
}

void finetune_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "finetune";
    guard_stage_dir(root, cfg, force);
    const DatasetManifest manifest = require_dataset(cfg);
    const nn::UNetParams general = require_general_checkpoint(cfg);
    const fs::path dataset_root = cfg.outdir / "dataset";
    const ShimBasis basis = sh_basis(cfg.grid(), cfg.grid().center());

    const auto tests = manifest.test_subjects();
    if (tests.empty()) throw PrerequisiteError("finetune: dataset holds no test subjects");
    for (std::size_t t = 0; t < tests.size(); ++t) {
        const SubjectEntry& subj = *tests[t];
        const auto instances = build_instances(dataset_root, subj, finetune_positions(cfg));
        const std::uint64_t subj_seed =
            derive_seed(cfg.seed, static_cast<std::uint64_t>(cfg.train_subjects + t));
        const nn::UNetParams ft =
            nn::finetune(general, instances, &basis, finetune_hyper_from(cfg, subj_seed));
        nn::save_checkpoint(ft, root / (subj.id + ".b0nn"));
    }
    write_stage_manifest(root, "finetune", cfg);
}

void predict_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "predict";
    guard_stage_dir(root, cfg, force);
    const DatasetManifest manifest = require_dataset(cfg);
    const nn::UNetParams general = require_general_checkpoint(cfg);
    const fs::path dataset_root = cfg.outdir / "dataset";

    for (const SubjectEntry* subj : manifest.test_subjects()) {
        const PositionVolumes initial = load_position(dataset_root, subj->positions.at(0), subj->id);
        const fs::path ft_path = cfg.outdir / "finetune" / (subj->id + ".b0nn");
        std::optional<nn::UNetParams> ft;
        if (fs::exists(ft_path)) ft = nn::load_checkpoint(ft_path);
        for (int pos : eval_positions(cfg)) {
            for (const auto& p : subj->positions) {
                if (p.index != pos) continue;
                const PositionVolumes pv = load_position(dataset_root, p, subj->id);
                const fs::path dir = root / subj->id / p.dir;
                fs::create_directories(dir);
                write_volume(nn::predict(general, initial.field_gt, initial.anat, pv.anat),
                             dir / "pred_pr0.b0v");
                if (ft)
                    write_volume(nn::predict(*ft, initial.field_gt, initial.anat, pv.anat),
                                 dir / "pred_prft.b0v");
            }
        }
    }
    write_stage_manifest(root, "predict", cfg);
}

void evaluate_stage(const RunConfig& cfg, bool force) {
    const fs::path root = cfg.outdir / "eval";
    guard_stage_dir(root, cfg, force);
    const DatasetManifest manifest = require_dataset(cfg);
    const nn::UNetParams general = require_general_checkpoint(cfg);
    const fs::path dataset_root = cfg.outdir / "dataset";

    const fs::path residual_dir = root / "residuals";
    fs::create_directories(residual_dir);

    EvalReport report;
    const auto tests = manifest.test_subjects();
    if (tests.empty()) throw PrerequisiteError("evaluate: dataset holds no test subjects");
    for (const SubjectEntry* subj : tests) {
        const fs::path ft_path = cfg.outdir / "finetune" / (subj->id + ".b0nn");
        if (!fs::exists(ft_path))
            throw PrerequisiteError("fine-tuned checkpoint missing: " + ft_path.string() +
                                    "; run 'finetune' first");
        const nn::UNetParams ft = nn::load_checkpoint(ft_path);
        SubjectArtifacts art;
        art.subject = subj;
        art.eval_positions = eval_positions(cfg);
        art.general = &general;
        art.finetuned = &ft;
        auto cells = evaluate_subject(dataset_root, art, residual_dir);
        for (auto& c : cells) report.cells.push_back(std::move(c));
    }
    report.recompute_aggregates();
    write_report_json(report, root / "report.json");
    write_fig3_csv(report, root / "fig3_aggregates.csv");
    write_stage_manifest(root, "evaluate", cfg);
}

} // namespace

void run_pipeline(const RunConfig& cfg, Stage stage, bool force) {
    PipelineLock lock(cfg.outdir, force);
    // normalized config echoed next to the artifacts
    {
        std::ofstream f(cfg.outdir / "config_normalized.json");
        f << config_to_json_text(cfg) << '\n';
    }
    switch (stage) {
        case Stage::Simulate: simulate_stage(cfg, force); break;
        case Stage::Calibrate: calibrate_stage(cfg, force); break;
        case Stage::Train: train_stage(cfg, force); break;
        case Stage::Finetune: finetune_stage(cfg, force); break;
        case Stage::Predict: predict_stage(cfg, force); break;
        case Stage::Evaluate: evaluate_stage(cfg, force); break;
        case Stage::All:
            simulate_stage(cfg, force);
            calibrate_stage(cfg, force);
            train_stage(cfg, force);
            finetune_stage(cfg, force);
            evaluate_stage(cfg, force);
            break;
    }
}

void run_sweep_finetune(const RunConfig& cfg, bool force) {
    PipelineLock lock(cfg.outdir, force);
    const fs::path root = cfg.outdir / "sweeps";
    guard_stage_dir(root, cfg, force);
    const DatasetManifest manifest = require_dataset(cfg);
    const nn::UNetParams general = require_general_checkpoint(cfg);
    const fs::path dataset_root = cfg.outdir / "dataset";
    const ShimBasis basis = sh_basis(cfg.grid(), cfg.grid().center());

    const auto tests = manifest.test_subjects();
    if (tests.empty()) throw PrerequisiteError("sweep-finetune: dataset holds no test subjects");
    const SubjectEntry& subj = *tests[0]; // sweeps run on one subject
    const std::uint64_t subj_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(cfg.train_subjects));
    const std::vector<int> evals = eval_positions(cfg);
    if (evals.empty()) throw PrerequisiteError("sweep-finetune: no held-out positions");

    auto eval_with = [&](const nn::UNetParams* ft) {
        SubjectArtifacts art;
        art.subject = &subj;
        art.eval_positions = evals;
        art.general = &general;
        art.finetuned = ft ? ft : &general; // epochs=0 / PR0 row
        return evaluate_subject(dataset_root, art);
    };

    // ---- epochs sweep: snapshots of one run (prefix-equivalent to
    // independent runs at each epoch count) ----
    std::vector<int> epoch_points = cfg.sweep_epochs;
    std::sort(epoch_points.begin(), epoch_points.end());
    epoch_points.erase(std::unique(epoch_points.begin(), epoch_points.end()), epoch_points.end());
    const int max_epochs = epoch_points.empty() ? 0 : epoch_points.back();

    const auto ft_instances = build_instances(dataset_root, subj, finetune_positions(cfg));
    nn::TrainHyper hyper = finetune_hyper_from(cfg, subj_seed);
    hyper.epochs = max_epochs;

    std::vector<std::pair<int, nn::UNetParams>> snapshots;
    if (!epoch_points.empty() && epoch_points.front() == 0)
        snapshots.emplace_back(0, general);
    nn::UNetParams running = general;
    running.reset_adam();
    if (max_epochs > 0)
        nn::train_unet(running, ft_instances, &basis, hyper,
                       [&](int epoch, const nn::UNetParams& p) {
                           if (std::binary_search(epoch_points.begin(), epoch_points.end(), epoch))
                               snapshots.emplace_back(epoch, p);
                       });

    std::vector<SweepRow> rows;
    for (const auto& [epochs, params] : snapshots) {
        const auto cells = eval_with(epochs == 0 ? nullptr : &params);
        for (const auto& c : cells) {
            if (c.approach != Approach::PRFT) continue;
            rows.push_back({"epochs", epochs, c.subject, c.position, c.stats.median_hz,
                            c.stats.iqr_hz});
        }
    }
    write_sweep_csv(rows, root / "fig4_epochs.csv");

    // ---- volumes sweep: independent runs on the first v fine-tune positions ----
    std::vector<SweepRow> vrows;
    for (int v : cfg.sweep_volumes) {
        std::vector<int> pos_idx;
        for (int i = 1; i <= v; ++i) pos_idx.push_back(i);
        const auto instances = build_instances(dataset_root, subj, pos_idx);
        nn::TrainHyper h = finetune_hyper_from(cfg, subj_seed);
        const nn::UNetParams ft = nn::finetune(general, instances, &basis, h);
        const auto cells = eval_with(&ft);
        for (const auto& c : cells) {
            if (c.approach != Approach::PRFT) continue;
            vrows.push_back({"volumes", v, c.subject, c.position, c.stats.median_hz,
                             c.stats.iqr_hz});
        }
    }
    write_sweep_csv(vrows, root / "fig5_volumes.csv");
    write_stage_manifest(root, "sweep-finetune", cfg);
}

} // namespace b0cast
