#pragma once

#include <cstdint>
#include <vector>

#include "b0cast/volume.hpp"

namespace b0cast {

struct CavitySpec {
    Vec3 center_mm{0.0, 0.0, 0.0}; // relative to head center
    double radius_mm = 12.0;
};

struct PhantomSpec {
    GridSpec grid;                       // nominal acquisition grid
    Vec3 semi_axes_mm{70.0, 80.0, 72.0}; // head ellipsoid
    // desk-scale contrast: the physical tissue/air difference (~9.4 ppm)
    // drives sinus hotspots past the temporal-unwrap guide band, so the
    // default is scaled to keep in-mask fields within +-166 Hz at 7 T
    double tissue_chi_ppm = -4.0;
    double air_chi_ppm = 0.36;           // background and cavities
    std::vector<CavitySpec> cavities;    // air pockets (sinus stand-ins)
    double mask_erosion_mm = 7.0;        // brain mask pulled in from the skull
    double cavity_margin_mm = 8.0;       // brain mask kept away from cavities
    // Per-subject jitter applied by make_phantom (fractions of the nominals).
    double axis_jitter = 0.06;
    double cavity_pos_jitter_mm = 5.0;
    double cavity_radius_jitter = 0.15;

    static PhantomSpec desk_default(GridSpec grid);
};

// Cavity layout scaled to the head size: one anterior pocket (frontal
// hotspot) plus two smaller lateral ones.
std::vector<CavitySpec> proportional_cavities(const Vec3& semi_axes_mm);

// Digital head stand-in: susceptibility, anatomy channel and brain mask.
struct Phantom {
    Volume3D chi;  // ppm
    Volume3D anat; // dimensionless, in [0,1]
    Mask3D mask;   // head interior minus cavities
};

// Deterministic for a given (spec, seed). Throws if the (jittered) ellipsoid
// does not fit inside the FOV with a 4-voxel margin per axis.
Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed);

} // namespace b0cast
