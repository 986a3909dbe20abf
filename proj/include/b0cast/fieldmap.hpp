#pragma once

#include <vector>

#include "b0cast/volume.hpp"

namespace b0cast {

struct FieldMapResult {
    Volume3D field;       // Hz
    Volume3D reliability; // dimensionless, [0,1]
    Mask3D mask;          // voxels the estimate is considered valid on
};

// Dual-echo field map: field = angle(conj(S1)*S2) / (2*pi*dTE_s), Hz.
// Unambiguous within +-1/(2*dTE). Reliability is |S1||S2| normalized to
// [0,1] over the volume.
FieldMapResult hermitian_b0(const ComplexVolume& echoes);

struct UnwrapResult {
    std::vector<Volume3D> phases_rad; // one per echo, unwrapped
    Mask3D residual_ok;               // false where the closeness bound failed
};

// Temporal unwrapping: each echo's measured phase is shifted by the integer
// multiple of 2*pi bringing it within pi of the guide-predicted phase
// 2*pi*guide*TE. Exact integer correction, no smoothing. Requires the guide
// to be alias-free at the shortest echo spacing.
UnwrapResult unwrap_temporal(const ComplexVolume& echoes, const FieldMapResult& guide);

// Per-voxel weighted least-squares slope of unwrapped phase against
// 2*pi*TE_s with a free intercept (absorbs transceiver phase). `weights`
// holds either one volume shared by all echoes or one volume per echo
// (squared magnitudes). Voxels where all weights vanish get field 0 and a
// false mask entry.
FieldMapResult fit_multiecho(const std::vector<Volume3D>& unwrapped_phases,
                             const std::vector<double>& echoes_ms,
                             const std::vector<Volume3D>& weights);

// Convenience chain: hermitian guide from the first two echoes, temporal
// unwrap, then the weighted multi-echo fit (weights = mean squared
// magnitude across echoes).
FieldMapResult estimate_fieldmap(const ComplexVolume& echoes);

} // namespace b0cast
