#include "b0cast/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "b0cast/b0v_io.hpp"

namespace b0cast {

using nlohmann::json;

std::vector<const SubjectEntry*> DatasetManifest::train_subjects() const {
    std::vector<const SubjectEntry*> out;
    for (const auto& s : subjects)
        if (!s.is_test) out.push_back(&s);
    return out;
}

std::vector<const SubjectEntry*> DatasetManifest::test_subjects() const {
    std::vector<const SubjectEntry*> out;
    for (const auto& s : subjects)
        if (s.is_test) out.push_back(&s);
    return out;
}

void write_dataset_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["seed"] = m.seed;
    j["config_hash"] = m.config_hash;
    j["code_version"] = m.code_version;
    j["dims"] = {m.dims[0], m.dims[1], m.dims[2]};
    json subjects = json::array();
    for (const auto& s : m.subjects) {
        json positions = json::array();
        for (const auto& p : s.positions)
            positions.push_back({{"index", p.index},
                                 {"dir", p.dir},
                                 {"pose",
                                  {{"tx_mm", p.pose.t_mm[0]},
                                   {"ty_mm", p.pose.t_mm[1]},
                                   {"tz_mm", p.pose.t_mm[2]},
                                   {"rx_deg", p.pose.r_deg[0]},
                                   {"ry_deg", p.pose.r_deg[1]},
                                   {"rz_deg", p.pose.r_deg[2]},
                                   {"convention", RigidPose::convention}}}});
        subjects.push_back({{"id", s.id}, {"is_test", s.is_test}, {"positions", positions}});
    }
    j["subjects"] = subjects;
    std::ofstream f(path);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << j.dump(2) << '\n';
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw PrerequisiteError("dataset manifest not found: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ParseError("dataset manifest: invalid JSON: " + std::string(e.what()));
    }
    DatasetManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.code_version = j.at("code_version").get<std::string>();
        const auto dims = j.at("dims").get<std::vector<int>>();
        if (dims.size() != 3) throw ParseError("dataset manifest: dims must have 3 entries");
        m.dims = {dims[0], dims[1], dims[2]};
        for (const auto& js : j.at("subjects")) {
            SubjectEntry s;
            s.id = js.at("id").get<std::string>();
            s.is_test = js.at("is_test").get<bool>();
            for (const auto& jp : js.at("positions")) {
                PositionEntry p;
                p.index = jp.at("index").get<int>();
                p.dir = jp.at("dir").get<std::string>();
                const auto& pose = jp.at("pose");
                p.pose.t_mm = {pose.at("tx_mm").get<double>(), pose.at("ty_mm").get<double>(),
                               pose.at("tz_mm").get<double>()};
                p.pose.r_deg = {pose.at("rx_deg").get<double>(), pose.at("ry_deg").get<double>(),
                                pose.at("rz_deg").get<double>()};
                s.positions.push_back(std::move(p));
            }
            m.subjects.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ParseError("dataset manifest: malformed field: " + std::string(e.what()));
    }
    return m;
}

PositionVolumes load_position(const std::filesystem::path& dataset_root, const PositionEntry& pos,
                              const std::string& subject_dir) {
    const auto dir = dataset_root / subject_dir / pos.dir;
    if (!std::filesystem::exists(dir))
        throw PrerequisiteError("position directory missing: " + dir.string());
    PositionVolumes v;
    v.anat = read_volume(dir / "anat.b0v");
    v.field_gt = read_volume(dir / "field_gt.b0v");
    v.mask = volume_to_mask(read_volume(dir / "mask.b0v"));
    v.nav_field = read_volume(dir / "nav_field.b0v");
    const auto poses = read_poses(dir / "pose.json");
    if (poses.size() != 1) throw ParseError("pose.json must hold exactly one pose: " + dir.string());
    v.pose = poses[0];
    return v;
}

std::vector<nn::TrainingInstance> build_instances(const std::filesystem::path& dataset_root,
                                                  const SubjectEntry& subject,
                                                  std::vector<int> position_indices) {
    if (subject.positions.empty() || subject.positions[0].index != 0)
        throw IntegrityError("subject '" + subject.id + "' has no initial position");
    const PositionVolumes initial =
        load_position(dataset_root, subject.positions[0], subject.id);

    if (position_indices.empty())
        for (std::size_t i = 1; i < subject.positions.size(); ++i)
            position_indices.push_back(subject.positions[i].index);

    std::vector<nn::TrainingInstance> instances;
    for (int idx : position_indices) {
        const PositionEntry* entry = nullptr;
        for (const auto& p : subject.positions)
            if (p.index == idx) {
                entry = &p;
                break;
            }
        if (!entry)
            throw PrerequisiteError("subject '" + subject.id + "' has no position " +
                                    std::to_string(idx));
        PositionVolumes pv = load_position(dataset_root, *entry, subject.id);
        nn::TrainingInstance inst;
        inst.b0_init = initial.field_gt;
        inst.anat_init = initial.anat;
        inst.anat_new = std::move(pv.anat);
        inst.b0_new = std::move(pv.field_gt);
        inst.pose = pv.pose;
        inst.mask = std::move(pv.mask);
        inst.normalize_metadata();
        instances.push_back(std::move(inst));
    }
    return instances;
}

} // namespace b0cast
