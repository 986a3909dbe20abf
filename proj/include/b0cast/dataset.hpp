#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "b0cast/nn/train.hpp"
#include "b0cast/rigid.hpp"

namespace b0cast {

// On-disk layout written by the simulate stage:
//   <root>/dataset_manifest.json
//   <root>/<subject>/pos_NNN/{anat.b0v, field_gt.b0v, mask.b0v,
//                             nav_field.b0v, pose.json}
// Position 0 is the initial (identity-pose) acquisition.

struct PositionEntry {
    int index = 0;
    RigidPose pose;
    std::string dir; // relative to the dataset root
};

struct SubjectEntry {
    std::string id;   // e.g. "train_00"
    bool is_test = false;
    std::vector<PositionEntry> positions;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string code_version;
    Dims3 dims{0, 0, 0};
    std::vector<SubjectEntry> subjects;

    std::vector<const SubjectEntry*> train_subjects() const;
    std::vector<const SubjectEntry*> test_subjects() const;
};

void write_dataset_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_dataset_manifest(const std::filesystem::path& path);

struct PositionVolumes {
    Volume3D anat;
    Volume3D field_gt;
    Mask3D mask;
    Volume3D nav_field;
    RigidPose pose;
};

PositionVolumes load_position(const std::filesystem::path& dataset_root, const PositionEntry& pos,
                              const std::string& subject_dir);

// One training instance per non-initial position: inputs from position 0,
// target from the listed position. `position_indices` empty = all positions
// except 0.
std::vector<nn::TrainingInstance> build_instances(const std::filesystem::path& dataset_root,
                                                  const SubjectEntry& subject,
                                                  std::vector<int> position_indices = {});

} // namespace b0cast
