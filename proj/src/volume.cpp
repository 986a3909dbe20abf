#include "b0cast/volume.hpp"

#include <algorithm>
#include <cmath>

namespace b0cast {

std::string units_to_string(Units u) {
    switch (u) {
        case Units::Hz: return "Hz";
        case Units::ppm: return "ppm";
        case Units::rad: return "rad";
        case Units::dimensionless: return "dimensionless";
    }
    throw Error("unreachable units value");
}

Units units_from_string(const std::string& s) {
    if (s == "Hz") return Units::Hz;
    if (s == "ppm") return Units::ppm;
    if (s == "rad") return Units::rad;
    if (s == "dimensionless") return Units::dimensionless;
    throw ParseError("unknown units tag: '" + s + "'");
}

void Volume3D::validate() const {
    grid.validate();
    if (data.size() != grid.num_voxels())
        throw IntegrityError("Volume3D: data length " + std::to_string(data.size()) +
                             " does not match dims product " + std::to_string(grid.num_voxels()));
    for (float v : data)
        if (!std::isfinite(v)) throw IntegrityError("Volume3D: non-finite value in data");
}

std::size_t Mask3D::count_true() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
}

void ComplexVolume::validate() const {
    grid.validate();
    if (echoes_ms.size() < 2) throw IntegrityError("ComplexVolume: needs at least 2 echoes");
    for (std::size_t e = 1; e < echoes_ms.size(); ++e)
        if (!(echoes_ms[e] > echoes_ms[e - 1]))
            throw IntegrityError("ComplexVolume: echo times must be strictly increasing");
    if (echo_data.size() != echoes_ms.size())
        throw IntegrityError("ComplexVolume: echo_data count does not match echoes_ms");
    for (const auto& e : echo_data)
        if (e.size() != grid.num_voxels())
            throw IntegrityError("ComplexVolume: per-echo data length does not match dims");
}

Volume3D block_downsample(const Volume3D& vol, Dims3 factor) {
    vol.grid.validate();
    for (int a = 0; a < 3; ++a) {
        if (factor[a] <= 0) throw ShapeError("block_downsample: factor must be positive");
        if (vol.grid.dims[a] % factor[a] != 0)
            throw ShapeError("block_downsample: dim " + std::to_string(vol.grid.dims[a]) +
                             " not divisible by factor " + std::to_string(factor[a]) + " on axis " +
                             std::to_string(a));
    }
    GridSpec out = vol.grid;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] = vol.grid.dims[a] / factor[a];
        out.spacing[a] = vol.grid.spacing[a] * factor[a];
        // new voxel (0,0,0) center = mean of the block's voxel centers
        out.origin[a] = vol.grid.origin[a] + 0.5 * (factor[a] - 1) * vol.grid.spacing[a];
    }
    Volume3D res(out, vol.units);
    const double inv = 1.0 / (static_cast<double>(factor[0]) * factor[1] * factor[2]);
    for (int K = 0; K < out.dims[2]; ++K)
        for (int J = 0; J < out.dims[1]; ++J)
            for (int I = 0; I < out.dims[0]; ++I) {
                double acc = 0.0;
                for (int dk = 0; dk < factor[2]; ++dk)
                    for (int dj = 0; dj < factor[1]; ++dj)
                        for (int di = 0; di < factor[0]; ++di)
                            acc += vol.at(I * factor[0] + di, J * factor[1] + dj, K * factor[2] + dk);
                res.at(I, J, K) = static_cast<float>(acc * inv);
            }
    return res;
}

Volume3D upsample_nearest(const Volume3D& vol, Dims3 factor) {
    vol.grid.validate();
    GridSpec out = vol.grid;
    for (int a = 0; a < 3; ++a) {
        if (factor[a] <= 0) throw ShapeError("upsample_nearest: factor must be positive");
        out.dims[a] = vol.grid.dims[a] * factor[a];
        out.spacing[a] = vol.grid.spacing[a] / factor[a];
        out.origin[a] = vol.grid.origin[a] - 0.5 * (factor[a] - 1) * out.spacing[a];
    }
    Volume3D res(out, vol.units);
    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i)
                res.at(i, j, k) = vol.at(i / factor[0], j / factor[1], k / factor[2]);
    return res;
}

bool sample_volume_trilinear(const Volume3D& vol, double x, double y, double z,
                             OutsidePolicy policy, float& out) {
    const auto& d = vol.grid.dims;
    auto snap = [](double v) {
        const double r = std::round(v);
        return (std::abs(v - r) < 1e-9) ? r : v;
    };
    x = snap(x); y = snap(y); z = snap(z);
    if (policy == OutsidePolicy::Zero) {
        if (x < 0.0 || y < 0.0 || z < 0.0 || x > d[0] - 1 || y > d[1] - 1 || z > d[2] - 1) {
            out = 0.0f;
            return false;
        }
    } else {
        x = std::clamp(x, 0.0, static_cast<double>(d[0] - 1));
        y = std::clamp(y, 0.0, static_cast<double>(d[1] - 1));
        z = std::clamp(z, 0.0, static_cast<double>(d[2] - 1));
    }
    const int i0 = std::min(static_cast<int>(x), d[0] - 1);
    const int j0 = std::min(static_cast<int>(y), d[1] - 1);
    const int k0 = std::min(static_cast<int>(z), d[2] - 1);
    const int i1 = std::min(i0 + 1, d[0] - 1);
    const int j1 = std::min(j0 + 1, d[1] - 1);
    const int k1 = std::min(k0 + 1, d[2] - 1);
    const double fx = x - i0, fy = y - j0, fz = z - k0;
    if (fx == 0.0 && fy == 0.0 && fz == 0.0) {
        out = vol.at(i0, j0, k0); // bit-exact fast path at lattice points
        return true;
    }
    const double c000 = vol.at(i0, j0, k0), c100 = vol.at(i1, j0, k0);
    const double c010 = vol.at(i0, j1, k0), c110 = vol.at(i1, j1, k0);
    const double c001 = vol.at(i0, j0, k1), c101 = vol.at(i1, j0, k1);
    const double c011 = vol.at(i0, j1, k1), c111 = vol.at(i1, j1, k1);
    const double c00 = c000 + fx * (c100 - c000);
    const double c10 = c010 + fx * (c110 - c010);
    const double c01 = c001 + fx * (c101 - c001);
    const double c11 = c011 + fx * (c111 - c011);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    out = static_cast<float>(c0 + fz * (c1 - c0));
    return true;
}

Volume3D resample_trilinear(const Volume3D& vol, const GridSpec& out_grid, OutsidePolicy policy) {
    vol.grid.validate();
    out_grid.validate();
    Volume3D res(out_grid, vol.units);
    for (int k = 0; k < out_grid.dims[2]; ++k)
        for (int j = 0; j < out_grid.dims[1]; ++j)
            for (int i = 0; i < out_grid.dims[0]; ++i) {
                const Vec3 w = out_grid.voxel_to_world(i, j, k);
                const Vec3 v = vol.grid.world_to_voxel(w);
                float s;
                sample_volume_trilinear(vol, v[0], v[1], v[2], policy, s);
                res.at(i, j, k) = s;
            }
    return res;
}

double mean(const Volume3D& vol) {
    double acc = 0.0;
    for (float v : vol.data) acc += v;
    return vol.data.empty() ? 0.0 : acc / static_cast<double>(vol.data.size());
}

float max_abs(const Volume3D& vol) {
    float m = 0.0f;
    for (float v : vol.data) m = std::max(m, std::abs(v));
    return m;
}

Volume3D mask_to_volume(const Mask3D& mask) {
    Volume3D v(mask.grid, Units::dimensionless);
    for (std::size_t i = 0; i < mask.data.size(); ++i) v.data[i] = mask.data[i] ? 1.0f : 0.0f;
    return v;
}

Mask3D volume_to_mask(const Volume3D& vol, float threshold) {
    Mask3D m(vol.grid);
    for (std::size_t i = 0; i < vol.data.size(); ++i) m.data[i] = vol.data[i] > threshold ? 1 : 0;
    return m;
}

} // namespace b0cast
