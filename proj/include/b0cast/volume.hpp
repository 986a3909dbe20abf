#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "b0cast/grid.hpp"

namespace b0cast {

enum class Units { Hz, ppm, rad, dimensionless };

std::string units_to_string(Units u);
Units units_from_string(const std::string& s);

// Dense scalar volume, x-fastest layout: index = i + nx*(j + ny*k).
// Disk format is f32; in-memory data is kept in double so estimation and
// calibration chains are not limited by storage quantization.
struct Volume3D {
    GridSpec grid;
    Units units = Units::dimensionless;
    std::vector<double> data;

    Volume3D() = default;
    Volume3D(GridSpec g, Units u, double fill = 0.0)
        : grid(g), units(u), data(g.num_voxels(), fill) {}

    double& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
    const double& at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }

    void validate() const; // dims/data length agreement + finiteness
};

struct Mask3D {
    GridSpec grid;
    std::vector<std::uint8_t> data;

    Mask3D() = default;
    explicit Mask3D(GridSpec g, bool fill = false)
        : grid(g), data(g.num_voxels(), fill ? 1 : 0) {}

    bool at(int i, int j, int k) const { return data[grid.index(i, j, k)] != 0; }
    void set(int i, int j, int k, bool v) { data[grid.index(i, j, k)] = v ? 1 : 0; }

    std::size_t count_true() const;
};

// Multi-echo complex volume; one contiguous (re,im) buffer per echo.
struct ComplexVolume {
    GridSpec grid;
    std::vector<double> echoes_ms; // strictly increasing, >= 2 for estimation ops
    std::vector<std::vector<std::complex<float>>> echo_data;

    std::size_t num_echoes() const { return echoes_ms.size(); }
    void validate() const;
};

// Arithmetic mean over factor-sized blocks; dims must divide evenly.
// Spacing is multiplied by the factor, units preserved.
Volume3D block_downsample(const Volume3D& vol, Dims3 factor);

// Inverse lattice of block_downsample: every fine voxel takes its block value.
Volume3D upsample_nearest(const Volume3D& vol, Dims3 factor);

enum class OutsidePolicy { Zero, ClampToEdge };

// Trilinear sample at continuous voxel coordinate (x,y,z). Returns false when
// the coordinate falls outside the lattice under the Zero policy (out = 0).
// Coordinates within 1e-9 of the lattice are snapped so lattice-aligned
// resampling reproduces stored values bit-exactly.
bool sample_volume_trilinear(const Volume3D& vol, double x, double y, double z,
                             OutsidePolicy policy, float& out);

// Trilinear resampling of vol at the voxel centers of out_grid (world-based).
Volume3D resample_trilinear(const Volume3D& vol, const GridSpec& out_grid, OutsidePolicy policy);

// Statistics helpers used across modules.
double mean(const Volume3D& vol);
float max_abs(const Volume3D& vol);

Volume3D mask_to_volume(const Mask3D& mask);
Mask3D volume_to_mask(const Volume3D& vol, float threshold = 0.5f);

} // namespace b0cast
