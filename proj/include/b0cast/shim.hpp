#pragma once

#include <array>
#include <string>
#include <vector>

#include "b0cast/fieldmap.hpp"
#include "b0cast/rng.hpp"
#include "b0cast/volume.hpp"

namespace b0cast {

// First/second-order shim terms in scanner order. Solid-harmonic shapes
// about the basis center, coordinates in meters:
//   X = x, Y = y, Z = z,
//   XY = x*y, ZY = z*y, Z2 = z^2 - (x^2+y^2)/2, ZX = z*x, X2-Y2 = x^2 - y^2,
// each scaled by 42.577 Hz/uT so a unit amplitude (1 uT/m^n) gives the field
// in Hz directly.
inline constexpr std::array<const char*, 8> kShimTerms = {"X",  "Y",  "Z",  "XY",
                                                          "ZY", "Z2", "ZX", "X2-Y2"};

int shim_term_order(const std::string& term); // 1 or 2
int shim_term_index(const std::string& term);

struct ShimBasis {
    GridSpec grid;
    Vec3 center_mm{0.0, 0.0, 0.0};
    std::vector<Volume3D> fields; // Hz per unit amplitude, kShimTerms order
};

// Sample all 8 terms on the grid about `center` (world mm).
ShimBasis sh_basis(const GridSpec& grid, const Vec3& center);

// Evaluate one term analytically at a world point (Hz per unit amplitude).
double shim_term_value(const std::string& term, const Vec3& point_mm, const Vec3& center_mm);

struct ShimCalibration {
    double coefficient = 0.0;  // Hz per (amplitude * basis) unit; 1.0 = nominal
    double residual_rms_hz = 0.0;
};

// Calibrate one term from amplitude-tagged field maps. The amplitude-0 map is
// the reference; difference maps are fitted against amplitude * basis by
// linear least squares inside the intersection of the map masks.
ShimCalibration fit_shim_calibration(const std::vector<FieldMapResult>& maps,
                                     const std::vector<double>& amplitudes,
                                     const std::string& term);

struct AugmentationSample {
    Volume3D field;              // Hz, sum over all 8 terms
    std::array<double, 8> amplitudes; // uT/m^n drawn per term
};

// Draw 8 independent amplitudes uniformly in [-range_n, +range_n] by term
// order and return the summed field. The same field must be added to both
// the input B0 channel and the target of one training instance.
AugmentationSample sample_augmentation(Rng& rng, double range_order1, double range_order2,
                                       const ShimBasis& basis);

// Analytic bound on |field| over the basis grid for given per-order ranges.
double augmentation_field_bound(const ShimBasis& basis, double range_order1, double range_order2);

} // namespace b0cast
