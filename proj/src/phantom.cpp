#include "b0cast/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "b0cast/rng.hpp"

namespace b0cast {

std::vector<CavitySpec> proportional_cavities(const Vec3& semi) {
    // anterior (+y) air pocket reproduces the frontal field hotspot; two
    // smaller lateral ones add asymmetry
    return {{{0.0, 0.58 * semi[1], -0.28 * semi[2]}, 0.18 * semi[1]},
            {{-0.37 * semi[0], 0.38 * semi[1], -0.39 * semi[2]}, 0.10 * semi[1]},
            {{0.37 * semi[0], 0.38 * semi[1], -0.39 * semi[2]}, 0.10 * semi[1]}};
}

PhantomSpec PhantomSpec::desk_default(GridSpec grid) {
    PhantomSpec s;
    s.grid = grid;
    s.cavities = proportional_cavities(s.semi_axes_mm);
    return s;
}

namespace {

// Smooth pseudo-anatomical texture: a few seeded low-frequency cosines.
struct Texture {
    struct Wave {
        Vec3 k;
        double phase;
        double amp;
    };
    std::vector<Wave> waves;

    Texture(Rng& rng, const Vec3& fov, int n) {
        for (int i = 0; i < n; ++i) {
            Wave w;
            for (int a = 0; a < 3; ++a)
                w.k[a] = 2.0 * M_PI * rng.uniform(0.5, 2.5) / fov[a];
            w.phase = rng.uniform(0.0, 2.0 * M_PI);
            w.amp = rng.uniform(0.5, 1.0);
            waves.push_back(w);
        }
    }

    double eval(const Vec3& p) const {
        double v = 0.0;
        for (const auto& w : waves)
            v += w.amp * std::cos(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
        return v / static_cast<double>(waves.size());
    }
};

inline double ellipsoid_r2(const Vec3& p, const Vec3& semi) {
    const double x = p[0] / semi[0], y = p[1] / semi[1], z = p[2] / semi[2];
    return x * x + y * y + z * z;
}

} // namespace

Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.grid.validate();
    Rng rng(seed);

    Vec3 semi = spec.semi_axes_mm;
    for (int a = 0; a < 3; ++a)
        semi[a] *= 1.0 + spec.axis_jitter * (2.0 * rng.uniform() - 1.0);

    std::vector<CavitySpec> cavities = spec.cavities;
    for (auto& c : cavities) {
        for (int a = 0; a < 3; ++a)
            c.center_mm[a] += spec.cavity_pos_jitter_mm * (2.0 * rng.uniform() - 1.0);
        c.radius_mm *= 1.0 + spec.cavity_radius_jitter * (2.0 * rng.uniform() - 1.0);
    }

    const Vec3 fov = spec.grid.fov();
    for (int a = 0; a < 3; ++a) {
        const double margin = 4.0 * spec.grid.spacing[a];
        if (semi[a] + margin > 0.5 * fov[a])
            throw ShapeError("make_phantom: ellipsoid semi-axis " + std::to_string(semi[a]) +
                             " mm exceeds FOV/2 minus 4-voxel margin on axis " + std::to_string(a));
    }

    const Vec3 center = spec.grid.center();
    Texture tex(rng, fov, 6);

    Phantom ph;
    ph.chi = Volume3D(spec.grid, Units::ppm, static_cast<float>(spec.air_chi_ppm));
    ph.anat = Volume3D(spec.grid, Units::dimensionless, 0.0f);
    ph.mask = Mask3D(spec.grid);

    const auto& d = spec.grid.dims;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const Vec3 w = spec.grid.voxel_to_world(i, j, k);
                const Vec3 p = {w[0] - center[0], w[1] - center[1], w[2] - center[2]};
                const double r2 = ellipsoid_r2(p, semi);
                if (r2 > 1.0) continue; // air background

                bool in_cavity = false;
                double cavity_dist = 1e30;
                for (const auto& c : cavities) {
                    const double dx = p[0] - c.center_mm[0];
                    const double dy = p[1] - c.center_mm[1];
                    const double dz = p[2] - c.center_mm[2];
                    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz) - c.radius_mm;
                    cavity_dist = std::min(cavity_dist, dist);
                    if (dist <= 0.0) in_cavity = true;
                }

                if (in_cavity) {
                    // cavity keeps the air susceptibility; anat stays dark
                    ph.anat.at(i, j, k) = 0.05f;
                    continue;
                }

                ph.chi.at(i, j, k) = static_cast<float>(spec.tissue_chi_ppm);
                // inner shell darker, textured cortex-like band outside
                const double shell = r2 < 0.25 ? -0.18 : 0.0;
                const double a =
                    std::clamp(0.65 + 0.22 * tex.eval(p) + shell, 0.0, 1.0);
                ph.anat.at(i, j, k) = static_cast<float>(a);

                // mask: pulled in from the skull, kept off the cavities
                const Vec3 semi_eroded = {semi[0] - spec.mask_erosion_mm,
                                          semi[1] - spec.mask_erosion_mm,
                                          semi[2] - spec.mask_erosion_mm};
                const bool inside_eroded = ellipsoid_r2(p, semi_eroded) <= 1.0;
                ph.mask.set(i, j, k, inside_eroded && cavity_dist > spec.cavity_margin_mm);
            }
    return ph;
}

} // namespace b0cast
