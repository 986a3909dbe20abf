#include "b0cast/shim.hpp"

#include <algorithm>
#include <cmath>

#include "b0cast/dipole.hpp"

namespace b0cast {

int shim_term_index(const std::string& term) {
    for (std::size_t i = 0; i < kShimTerms.size(); ++i)
        if (term == kShimTerms[i]) return static_cast<int>(i);
    throw ConfigError("unknown shim term '" + term + "'");
}

int shim_term_order(const std::string& term) {
    return shim_term_index(term) < 3 ? 1 : 2;
}

double shim_term_value(const std::string& term, const Vec3& point_mm, const Vec3& center_mm) {
    // coordinates in meters^n; unit amplitude in uT/m^n -> Hz via 42.577 Hz/uT
    const double x = (point_mm[0] - center_mm[0]) * 1e-3;
    const double y = (point_mm[1] - center_mm[1]) * 1e-3;
    const double z = (point_mm[2] - center_mm[2]) * 1e-3;
    const int idx = shim_term_index(term);
    double shape = 0.0;
    switch (idx) {
        case 0: shape = x; break;
        case 1: shape = y; break;
        case 2: shape = z; break;
        case 3: shape = x * y; break;
        case 4: shape = z * y; break;
        case 5: shape = z * z - 0.5 * (x * x + y * y); break;
        case 6: shape = z * x; break;
        case 7: shape = x * x - y * y; break;
    }
    return kHzPerMicroTesla * shape;
}

ShimBasis sh_basis(const GridSpec& grid, const Vec3& center) {
    grid.validate();
    ShimBasis basis;
    basis.grid = grid;
    basis.center_mm = center;
    for (const char* term : kShimTerms) {
        Volume3D f(grid, Units::Hz);
        for (int k = 0; k < grid.dims[2]; ++k)
            for (int j = 0; j < grid.dims[1]; ++j)
                for (int i = 0; i < grid.dims[0]; ++i)
                    f.at(i, j, k) =
                        static_cast<float>(shim_term_value(term, grid.voxel_to_world(i, j, k), center));
        basis.fields.push_back(std::move(f));
    }
    return basis;
}

ShimCalibration fit_shim_calibration(const std::vector<FieldMapResult>& maps,
                                     const std::vector<double>& amplitudes,
                                     const std::string& term) {
    if (maps.size() != amplitudes.size())
        throw ShapeError("fit_shim_calibration: map count does not match amplitude count");
    if (maps.size() < 2) throw ShapeError("fit_shim_calibration: needs at least 2 maps");
    const GridSpec grid = maps[0].field.grid;
    for (const auto& m : maps)
        if (!(m.field.grid == grid)) throw ShapeError("fit_shim_calibration: map grids differ");

    // locate the amplitude-0 reference
    int ref = -1;
    for (std::size_t i = 0; i < amplitudes.size(); ++i)
        if (amplitudes[i] == 0.0) {
            ref = static_cast<int>(i);
            break;
        }
    if (ref < 0)
        throw NumericalError("fit_shim_calibration: no amplitude-0 reference map");
    bool any_nonzero = false;
    for (double a : amplitudes) any_nonzero |= (a != 0.0);
    if (!any_nonzero)
        throw NumericalError("fit_shim_calibration: rank-deficient design (all amplitudes equal)");

    Mask3D common = maps[0].mask;
    for (const auto& m : maps)
        for (std::size_t i = 0; i < common.data.size(); ++i)
            common.data[i] = common.data[i] && m.mask.data[i];
    if (common.count_true() == 0)
        throw NumericalError("fit_shim_calibration: empty common mask");

    // analytic double-precision regressor (no f32 quantization on this side)
    const Vec3 center = grid.center();
    std::vector<double> b(grid.num_voxels());
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i)
                b[grid.index(i, j, k)] = shim_term_value(term, grid.voxel_to_world(i, j, k), center);

    // model: map_j - map_ref = c * a_j * basis  =>  closed-form LSQ for c
    double num = 0.0, den = 0.0;
    const std::size_t n = grid.num_voxels();
    for (std::size_t j = 0; j < maps.size(); ++j) {
        if (static_cast<int>(j) == ref) continue;
        const double a = amplitudes[j];
        for (std::size_t i = 0; i < n; ++i) {
            if (!common.data[i]) continue;
            const double diff = static_cast<double>(maps[j].field.data[i]) - maps[ref].field.data[i];
            num += a * b[i] * diff;
            den += a * a * b[i] * b[i];
        }
    }
    if (den <= 0.0)
        throw NumericalError("fit_shim_calibration: degenerate design (basis vanishes on mask)");

    ShimCalibration cal;
    cal.coefficient = num / den;

    double ss = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < maps.size(); ++j) {
        if (static_cast<int>(j) == ref) continue;
        const double a = amplitudes[j];
        for (std::size_t i = 0; i < n; ++i) {
            if (!common.data[i]) continue;
            const double diff = static_cast<double>(maps[j].field.data[i]) - maps[ref].field.data[i];
            const double r = diff - cal.coefficient * a * b[i];
            ss += r * r;
            ++count;
        }
    }
    cal.residual_rms_hz = std::sqrt(ss / static_cast<double>(count));
    return cal;
}

AugmentationSample sample_augmentation(Rng& rng, double range_order1, double range_order2,
                                       const ShimBasis& basis) {
    if (!(range_order1 >= 0.0) || !(range_order2 >= 0.0))
        throw ConfigError("sample_augmentation: ranges must be finite and non-negative");
    AugmentationSample s;
    s.field = Volume3D(basis.grid, Units::Hz);
    for (std::size_t t = 0; t < kShimTerms.size(); ++t) {
        const double range = t < 3 ? range_order1 : range_order2;
        s.amplitudes[t] = rng.uniform(-range, range);
    }
    const std::size_t n = basis.grid.num_voxels();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < kShimTerms.size(); ++t)
            acc += s.amplitudes[t] * basis.fields[t].data[i];
        s.field.data[i] = static_cast<float>(acc);
    }
    return s;
}

double augmentation_field_bound(const ShimBasis& basis, double range_order1, double range_order2) {
    double bound = 0.0;
    for (std::size_t t = 0; t < kShimTerms.size(); ++t) {
        const double range = t < 3 ? range_order1 : range_order2;
        bound += range * static_cast<double>(max_abs(basis.fields[t]));
    }
    return bound;
}

} // namespace b0cast
