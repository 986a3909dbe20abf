#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "b0cast/volume.hpp"

namespace b0cast {

// 6-DoF rigid pose. Rotations are applied intrinsically about `center`
// in order Z, then Y, then X (R = Rz*Ry*Rx), followed by the translation,
// all in world (scanner) coordinates:  x' = R*(x - c) + c + t.
struct RigidPose {
    Vec3 t_mm{0.0, 0.0, 0.0};
    Vec3 r_deg{0.0, 0.0, 0.0};

    static constexpr const char* convention = "ZYX-center";

    bool is_identity() const {
        return t_mm == Vec3{0, 0, 0} && r_deg == Vec3{0, 0, 0};
    }
};

using Affine = Eigen::Matrix4d;

// Homogeneous world-coordinate map for the pose about the given center.
// Identity pose yields the exact identity matrix.
Affine pose_to_affine(const RigidPose& pose, const Vec3& center);

// Apply a, then b (matrix product in application order): affine(b)*affine(a).
Affine compose(const RigidPose& a, const RigidPose& b, const Vec3& center);

// Analytic inverse; invert(a)*affine(a) = I to 1e-9.
Affine invert(const RigidPose& a, const Vec3& center);

// Resample vol onto out_grid after moving it by pose (rotation about the
// input volume's center). Each output voxel center is pulled back through
// affine(pose)^-1 and sampled trilinearly; pull-backs falling outside the
// input lattice produce 0 and a false entry in the validity mask.
std::pair<Volume3D, Mask3D> apply_rigid(const Volume3D& vol, const RigidPose& pose,
                                        const GridSpec& out_grid);

// Pose file: JSON array of
//   {"tx_mm":..,"ty_mm":..,"tz_mm":..,"rx_deg":..,"ry_deg":..,"rz_deg":..,
//    "convention":"ZYX-center"}
void write_poses(const std::vector<RigidPose>& poses, const std::filesystem::path& path);
std::vector<RigidPose> read_poses(const std::filesystem::path& path);

} // namespace b0cast
