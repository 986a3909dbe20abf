#include "b0cast/rigid.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace b0cast {

using nlohmann::json;

namespace {

Eigen::Matrix3d rotation_zyx(const Vec3& r_deg) {
    const double rx = r_deg[0] * M_PI / 180.0;
    const double ry = r_deg[1] * M_PI / 180.0;
    const double rz = r_deg[2] * M_PI / 180.0;
    Eigen::Matrix3d Rx, Ry, Rz;
    Rx << 1, 0, 0,
          0, std::cos(rx), -std::sin(rx),
          0, std::sin(rx), std::cos(rx);
    Ry << std::cos(ry), 0, std::sin(ry),
          0, 1, 0,
          -std::sin(ry), 0, std::cos(ry);
    Rz << std::cos(rz), -std::sin(rz), 0,
          std::sin(rz), std::cos(rz), 0,
          0, 0, 1;
    return Rz * Ry * Rx; // intrinsic Z, then Y, then X
}

} // namespace

Affine pose_to_affine(const RigidPose& pose, const Vec3& center) {
    const Eigen::Matrix3d R = rotation_zyx(pose.r_deg);
    const Eigen::Vector3d c(center[0], center[1], center[2]);
    const Eigen::Vector3d t(pose.t_mm[0], pose.t_mm[1], pose.t_mm[2]);
    Affine A = Affine::Identity();
    A.topLeftCorner<3, 3>() = R;
    A.topRightCorner<3, 1>() = c + t - R * c;
    return A;
}

Affine compose(const RigidPose& a, const RigidPose& b, const Vec3& center) {
    return pose_to_affine(b, center) * pose_to_affine(a, center);
}

Affine invert(const RigidPose& a, const Vec3& center) {
    const Affine A = pose_to_affine(a, center);
    const Eigen::Matrix3d Rt = A.topLeftCorner<3, 3>().transpose();
    Affine inv = Affine::Identity();
    inv.topLeftCorner<3, 3>() = Rt;
    inv.topRightCorner<3, 1>() = -Rt * A.topRightCorner<3, 1>();
    return inv;
}

std::pair<Volume3D, Mask3D> apply_rigid(const Volume3D& vol, const RigidPose& pose,
                                        const GridSpec& out_grid) {
    vol.grid.validate();
    out_grid.validate();
    const Vec3 c = vol.grid.center();
    const Affine inv = invert(pose, c);
    Volume3D out(out_grid, vol.units);
    Mask3D valid(out_grid);
    const bool same_grid_identity = pose.is_identity() && out_grid == vol.grid;
    if (same_grid_identity) {
        out.data = vol.data; // bit-level identity on the lattice
        valid = Mask3D(out_grid, true);
        return {std::move(out), std::move(valid)};
    }
    for (int k = 0; k < out_grid.dims[2]; ++k)
        for (int j = 0; j < out_grid.dims[1]; ++j)
            for (int i = 0; i < out_grid.dims[0]; ++i) {
                const Vec3 w = out_grid.voxel_to_world(i, j, k);
                const Eigen::Vector4d src = inv * Eigen::Vector4d(w[0], w[1], w[2], 1.0);
                const Vec3 v = vol.grid.world_to_voxel({src[0], src[1], src[2]});
                float s;
                const bool ok = sample_volume_trilinear(vol, v[0], v[1], v[2], OutsidePolicy::Zero, s);
                out.at(i, j, k) = s;
                valid.set(i, j, k, ok);
            }
    return {std::move(out), std::move(valid)};
}

void write_poses(const std::vector<RigidPose>& poses, const std::filesystem::path& path) {
    json arr = json::array();
    for (const auto& p : poses) {
        arr.push_back({{"tx_mm", p.t_mm[0]},
                       {"ty_mm", p.t_mm[1]},
                       {"tz_mm", p.t_mm[2]},
                       {"rx_deg", p.r_deg[0]},
                       {"ry_deg", p.r_deg[1]},
                       {"rz_deg", p.r_deg[2]},
                       {"convention", RigidPose::convention}});
    }
    std::ofstream f(path);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << arr.dump(2) << '\n';
}

std::vector<RigidPose> read_poses(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open for reading: " + path.string());
    json arr;
    try {
        f >> arr;
    } catch (const json::exception& e) {
        throw ParseError("pose file: invalid JSON in " + path.string() + ": " + e.what());
    }
    if (!arr.is_array()) throw ParseError("pose file: expected a JSON array in " + path.string());
    std::vector<RigidPose> poses;
    for (const auto& e : arr) {
        RigidPose p;
        try {
            p.t_mm = {e.at("tx_mm").get<double>(), e.at("ty_mm").get<double>(),
                      e.at("tz_mm").get<double>()};
            p.r_deg = {e.at("rx_deg").get<double>(), e.at("ry_deg").get<double>(),
                       e.at("rz_deg").get<double>()};
            if (e.at("convention").get<std::string>() != RigidPose::convention)
                throw ParseError("pose file: unsupported convention in " + path.string());
        } catch (const json::exception& ex) {
            throw ParseError("pose file: malformed entry in " + path.string() + ": " + ex.what());
        }
        poses.push_back(p);
    }
    return poses;
}

} // namespace b0cast
