#pragma once

#include "b0cast/dipole.hpp"
#include "b0cast/phantom.hpp"
#include "b0cast/rigid.hpp"
#include "b0cast/rng.hpp"
#include "b0cast/volume.hpp"

namespace b0cast {

struct SceneResult {
    Volume3D anat;     // moved anatomy
    Volume3D gt_field; // Hz, recomputed from the moved susceptibility
    Mask3D mask;       // moved brain mask
};

// Move the phantom rigidly and recompute the dipole field from the moved
// susceptibility. The chi volume is padded with air (half the FOV per side)
// before the spectral convolution so periodic wraparound is negligible, and
// the cropped field is demodulated to zero mean over the nominal FOV (the
// scanner frequency adjustment convention). The field change under motion is
// NOT a rigid transform of the initial field.
SceneResult scene_at_pose(const Phantom& phantom, const RigidPose& pose, const FieldScene& scene,
                          double air_chi_ppm);

// S(TE) = anat * exp(i*2*pi*field*TE_s) + complex Gaussian noise with
// standard deviation noise_sigma per component.
ComplexVolume simulate_multiecho(const Volume3D& field_hz, const Volume3D& anat,
                                 const std::vector<double>& echoes_ms, double noise_sigma,
                                 Rng& rng);

// Navigator-style baseline: block-average the scene down by `factor`,
// simulate the dual-echo pair, estimate the field with the Hermitian product
// and trilinearly upsample back onto the full grid. Fields beyond
// +-1/(2*dTE) alias; this is inherent to the estimator and not corrected.
Volume3D emulate_navigator(const Volume3D& gt_field, const Volume3D& anat, Dims3 factor,
                           double noise_sigma, const std::vector<double>& echoes_epi_ms,
                           Rng& rng);

} // namespace b0cast
