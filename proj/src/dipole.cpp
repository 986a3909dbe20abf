#include "b0cast/dipole.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace b0cast {

double dipole_kernel_value(double fx, double fy, double fz) {
    const double f2 = fx * fx + fy * fy + fz * fz;
    if (f2 == 0.0) return 0.0;
    return 1.0 / 3.0 - (fz * fz) / f2;
}

namespace {

// FFTW planners are not thread-safe; plan creation is serialized.
std::mutex fftw_mutex;

struct FftPlan {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    ~FftPlan() {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
    }
};

inline double freq(int idx, int n, double spacing_mm) {
    const int f = idx <= n / 2 ? idx : idx - n;
    return static_cast<double>(f) / (n * spacing_mm);
}

} // namespace

Volume3D dipole_field(const Volume3D& chi, const FieldScene& scene) {
    chi.grid.validate();
    if (chi.units != Units::ppm)
        throw ShapeError("dipole_field: chi must be in ppm, got " + units_to_string(chi.units));
    if (chi.data.size() != chi.grid.num_voxels())
        throw IntegrityError("dipole_field: chi data length mismatch");

    const auto& d = chi.grid.dims;
    const std::size_t n = chi.grid.num_voxels();
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = {static_cast<double>(chi.data[i]), 0.0};

    FftPlan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex);
        // FFTW uses row-major dims; our layout is x-fastest = (z,y,x) row-major
        plan.fwd = fftw_plan_dft_3d(d[2], d[1], d[0],
                                    reinterpret_cast<fftw_complex*>(buf.data()),
                                    reinterpret_cast<fftw_complex*>(buf.data()),
                                    FFTW_FORWARD, FFTW_ESTIMATE);
        plan.inv = fftw_plan_dft_3d(d[2], d[1], d[0],
                                    reinterpret_cast<fftw_complex*>(buf.data()),
                                    reinterpret_cast<fftw_complex*>(buf.data()),
                                    FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan.fwd);

    for (int k = 0; k < d[2]; ++k) {
        const double fz = freq(k, d[2], chi.grid.spacing[2]);
        for (int j = 0; j < d[1]; ++j) {
            const double fy = freq(j, d[1], chi.grid.spacing[1]);
            for (int i = 0; i < d[0]; ++i) {
                const double fx = freq(i, d[0], chi.grid.spacing[0]);
                buf[chi.grid.index(i, j, k)] *= dipole_kernel_value(fx, fy, fz);
            }
        }
    }

    fftw_execute(plan.inv);

    const double scale = scene.larmor_hz_per_ppm() / static_cast<double>(n); // FFTW is unnormalized
    double max_re = 0.0, max_im = 0.0;
    for (const auto& v : buf) {
        max_re = std::max(max_re, std::abs(v.real()));
        max_im = std::max(max_im, std::abs(v.imag()));
    }
    if (max_re > 0.0 && max_im > 1e-6 * max_re)
        throw NumericalError("dipole_field: imaginary residue above 1e-6 relative");

    Volume3D field(chi.grid, Units::Hz);
    for (std::size_t i = 0; i < n; ++i)
        field.data[i] = static_cast<float>(buf[i].real() * scale);
    return field;
}

} // namespace b0cast
