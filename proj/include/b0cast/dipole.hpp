#pragma once

#include "b0cast/rigid.hpp"
#include "b0cast/volume.hpp"

namespace b0cast {

// gamma/2pi for protons; also Hz per microtesla.
inline constexpr double kGammaBarMhzPerTesla = 42.577;
inline constexpr double kHzPerMicroTesla = 42.577;

// Scanner-frame scene: field strength, pose, and the resulting field.
struct FieldScene {
    double b0_tesla = 7.0;
    RigidPose pose;
    Volume3D gt_field; // Hz, zero-mean over its grid

    double larmor_hz_per_ppm() const { return kGammaBarMhzPerTesla * b0_tesla; }
};

// Susceptibility k-space kernel D = 1/3 - kz^2/|k|^2, D(0) := 0 (mean-free
// field). Frequencies are physical (cycles/mm) so anisotropic voxels work.
double dipole_kernel_value(double fx, double fy, double fz);

// field = larmor_hz_per_ppm * IFFT[ D(k) * FFT[chi] ] on chi's own grid
// (periodic convolution; callers pad if wraparound matters). The imaginary
// residue of the round trip is checked against 1e-6 relative and discarded.
Volume3D dipole_field(const Volume3D& chi, const FieldScene& scene);

} // namespace b0cast
