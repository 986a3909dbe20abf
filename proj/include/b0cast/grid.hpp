#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

#include "b0cast/errors.hpp"

namespace b0cast {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<int, 3>;

// Regular 3D lattice. origin is the world coordinate (mm) of the center of
// voxel (0,0,0); world(i,j,k) = origin + (i*sx, j*sy, k*sz).
struct GridSpec {
    Dims3 dims{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::size_t num_voxels() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }

    Vec3 voxel_to_world(double i, double j, double k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
    }

    Vec3 world_to_voxel(const Vec3& w) const {
        return {(w[0] - origin[0]) / spacing[0], (w[1] - origin[1]) / spacing[1],
                (w[2] - origin[2]) / spacing[2]};
    }

    // World coordinate of the geometric center of the lattice.
    Vec3 center() const {
        return voxel_to_world(0.5 * (dims[0] - 1), 0.5 * (dims[1] - 1), 0.5 * (dims[2] - 1));
    }

    // Physical extent covered by voxel cells, dims*spacing, per axis.
    Vec3 fov() const {
        return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]};
    }

    bool operator==(const GridSpec& o) const {
        return dims == o.dims && spacing == o.spacing && origin == o.origin;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] <= 0) throw ShapeError("GridSpec: non-positive dim on axis " + std::to_string(a));
            if (!(spacing[a] > 0.0)) throw ShapeError("GridSpec: non-positive spacing on axis " + std::to_string(a));
        }
    }
};

// Grid centered on the world origin: FOV fov_mm split into n voxels per axis.
inline GridSpec make_centered_grid(Dims3 dims, Vec3 fov_mm) {
    GridSpec g;
    g.dims = dims;
    for (int a = 0; a < 3; ++a) {
        g.spacing[a] = fov_mm[a] / dims[a];
        g.origin[a] = -0.5 * (dims[a] - 1) * g.spacing[a];
    }
    return g;
}

} // namespace b0cast
