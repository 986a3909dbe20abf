#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "b0cast/config.hpp"
#include "b0cast/dataset.hpp"
#include "b0cast/pipeline.hpp"

using namespace b0cast;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string mini_config_text(const fs::path& outdir) {
    nlohmann::json j;
    j["seed"] = 7;
    j["outdir"] = outdir.string();
    j["grid"] = {{"dims", {16, 16, 16}}, {"fov_mm", {220, 220, 220}}};
    j["phantom"] = {{"semi_axes_mm", {46, 50, 46}}};
    j["poses"] = {{"count", 8}};
    j["subjects"] = {{"train", 2}, {"test", 1}};
    j["train"] = {{"epochs", 2}, {"lr", 1e-4}, {"base_channels", 2}, {"batch", 4}};
    j["finetune"] = {{"epochs", 2}, {"positions", 6}};
    j["sweep"] = {{"epochs", {0, 1, 2}}, {"volumes", {3, 4}}};
    return j.dump();
}

} // namespace

TEST_CASE("validate_config: minimal file gets all defaults") {
    const fs::path dir = fresh_dir("b0cast_cfg");
    const fs::path cfg_path = dir / "config.json";
    {
        std::ofstream f(cfg_path);
        f << R"({"seed": 42, "outdir": ")" << (dir / "out").string() << R"("})";
    }
    const RunConfig cfg = validate_config(cfg_path);
    CHECK(cfg.seed == 42);
    CHECK(cfg.grid_dims == Dims3{32, 32, 32});
    CHECK(cfg.poses_per_subject == 30);
    CHECK(cfg.train_subjects == 11);
    CHECK(cfg.test_subjects == 4);
    CHECK(cfg.train_lr == 1e-5);
    CHECK(cfg.train_weight_decay == 1e-7);
    CHECK(cfg.train_epochs == 200);
    CHECK(cfg.train_batch == 10);
    CHECK(cfg.finetune_lr == 1e-6);
    CHECK(cfg.finetune_epochs == 50);
    CHECK(cfg.finetune_positions == 6);
    CHECK(cfg.augment_range_order1 == 100.0);
    CHECK(cfg.sweep_epochs == std::vector<int>{5, 10, 20, 35, 50, 75, 100, 150, 200});
    CHECK(cfg.sweep_volumes == std::vector<int>{3, 4, 5, 6});
    CHECK(cfg.calibration_amplitudes == std::vector<double>{-100, -50, 0, 50, 100});
}

TEST_CASE("validate_config: rejections") {
    SUBCASE("negative learning rate") {
        CHECK_THROWS_AS(
            config_from_json_text(R"({"seed":1,"outdir":"o","train":{"lr":-1e-5}})"),
            ConfigError);
    }
    SUBCASE("unknown top-level key") {
        CHECK_THROWS_WITH_AS(config_from_json_text(R"({"seed":1,"outdir":"o","typo_key":1})"),
                             doctest::Contains("typo_key"), ConfigError);
    }
    SUBCASE("unknown nested key") {
        CHECK_THROWS_WITH_AS(
            config_from_json_text(R"({"seed":1,"outdir":"o","train":{"learning_rate":1}})"),
            doctest::Contains("train.learning_rate"), ConfigError);
    }
    SUBCASE("missing seed") {
        CHECK_THROWS_AS(config_from_json_text(R"({"outdir":"o"})"), ConfigError);
    }
    SUBCASE("sweep epochs may contain 0 (PR0 row)") {
        const RunConfig c = config_from_json_text(
            R"({"seed":1,"outdir":"o","sweep":{"epochs":[0,5],"volumes":[3]}})");
        CHECK(c.sweep_epochs == std::vector<int>{0, 5});
    }
}

TEST_CASE("config hash is stable and sensitive") {
    const RunConfig a = config_from_json_text(R"({"seed":1,"outdir":"o"})");
    const RunConfig b = config_from_json_text(R"({"seed":1,"outdir":"o"})");
    const RunConfig c = config_from_json_text(R"({"seed":2,"outdir":"o"})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("pipeline: stage order is enforced with prerequisite errors") {
    const fs::path dir = fresh_dir("b0cast_pipe_order");
    const RunConfig cfg = config_from_json_text(mini_config_text(dir / "out"));
    CHECK_THROWS_AS(run_pipeline(cfg, Stage::Evaluate), PrerequisiteError);
    CHECK_THROWS_AS(run_pipeline(cfg, Stage::Train), PrerequisiteError);
    CHECK_THROWS_AS(run_pipeline(cfg, Stage::Finetune), PrerequisiteError);
}

TEST_CASE("pipeline: simulate writes the declared per-position artifacts") {
    const fs::path dir = fresh_dir("b0cast_pipe_sim");
    const RunConfig cfg = config_from_json_text(mini_config_text(dir / "out"));
    run_pipeline(cfg, Stage::Simulate);

    const DatasetManifest m = read_dataset_manifest(cfg.outdir / "dataset" / "dataset_manifest.json");
    CHECK(m.seed == 7);
    CHECK(m.subjects.size() == 3);
    CHECK(m.train_subjects().size() == 2);
    CHECK(m.test_subjects().size() == 1);
    for (const auto& s : m.subjects) {
        CHECK(s.positions.size() == 8);
        CHECK(s.positions[0].index == 0);
        CHECK(s.positions[0].pose.is_identity());
        for (const auto& p : s.positions) {
            const fs::path pd = cfg.outdir / "dataset" / s.id / p.dir;
            for (const char* f :
                 {"anat.b0v", "field_gt.b0v", "mask.b0v", "nav_field.b0v", "pose.json"})
                CHECK(fs::exists(pd / f));
        }
    }
}

TEST_CASE("pipeline: full mini chain produces the evaluation report") {
    const fs::path dir = fresh_dir("b0cast_pipe_all");
    const RunConfig cfg = config_from_json_text(mini_config_text(dir / "out"));
    run_pipeline(cfg, Stage::All);

    CHECK(fs::exists(cfg.outdir / "calibration" / "coefficients.json"));
    CHECK(fs::exists(cfg.outdir / "train" / "checkpoint.b0nn"));
    CHECK(fs::exists(cfg.outdir / "train" / "loss.csv"));
    CHECK(fs::exists(cfg.outdir / "finetune" / "test_0.b0nn"));
    CHECK(fs::exists(cfg.outdir / "eval" / "report.json"));
    CHECK(fs::exists(cfg.outdir / "eval" / "fig3_aggregates.csv"));

    // report holds 4 approaches x 1 eval position x 1 test subject
    std::ifstream f(cfg.outdir / "eval" / "report.json");
    nlohmann::json report;
    f >> report;
    CHECK(report.at("cells").size() == 4);
    CHECK(report.at("schema") == "b0cast-eval-report-v1");

    // calibration recovered unit coefficients (noiseless)
    std::ifstream cf(cfg.outdir / "calibration" / "coefficients.json");
    nlohmann::json coef;
    cf >> coef;
    for (const auto& [term, entry] : coef.at("terms").items())
        CHECK(std::abs(entry.at("coefficient").get<double>() - 1.0) < 1e-6);
}

TEST_CASE("pipeline: mismatched config hash refuses overwrite without force") {
    const fs::path dir = fresh_dir("b0cast_pipe_force");
    const RunConfig cfg = config_from_json_text(mini_config_text(dir / "out"));
    run_pipeline(cfg, Stage::Simulate);
    RunConfig changed = cfg;
    changed.seed = 1234;
    CHECK_THROWS_AS(run_pipeline(changed, Stage::Simulate), ConfigError);
    run_pipeline(changed, Stage::Simulate, /*force=*/true); // allowed with force
}

TEST_CASE("pipeline: simulate twice yields byte-identical manifests") {
    const fs::path d1 = fresh_dir("b0cast_pipe_det1");
    const fs::path d2 = fresh_dir("b0cast_pipe_det2");
    RunConfig c1 = config_from_json_text(mini_config_text(d1 / "out"));
    RunConfig c2 = config_from_json_text(mini_config_text(d2 / "out"));
    run_pipeline(c1, Stage::Simulate);
    run_pipeline(c2, Stage::Simulate);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    // manifests differ only in outdir-independent content: compare subjects
    nlohmann::json m1 = nlohmann::json::parse(slurp(d1 / "out/dataset/dataset_manifest.json"));
    nlohmann::json m2 = nlohmann::json::parse(slurp(d2 / "out/dataset/dataset_manifest.json"));
    CHECK(m1.at("subjects") == m2.at("subjects"));
    CHECK(m1.at("seed") == m2.at("seed"));
    // a position payload is bit-identical
    CHECK(slurp(d1 / "out/dataset/train_0/pos_1/field_gt.b0v") ==
          slurp(d2 / "out/dataset/train_0/pos_1/field_gt.b0v"));
}
