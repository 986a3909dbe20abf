#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "b0cast/dipole.hpp"
#include "b0cast/rng.hpp"

using namespace b0cast;

namespace {

// Brute-force spectral sum, no FFT library involved: the spatial dipole
// kernel is the inverse DFT of the analytically sampled D(k).
std::vector<double> kernel_by_direct_dft(const GridSpec& g) {
    const auto& d = g.dims;
    const std::size_t n = g.num_voxels();
    auto freq = [&](int idx, int axis) {
        const int f = idx <= d[axis] / 2 ? idx : idx - d[axis];
        return static_cast<double>(f) / (d[axis] * g.spacing[axis]);
    };
    // per-axis twiddle tables e^{+2*pi*i*k*r/n}
    std::vector<std::vector<std::complex<double>>> tw(3);
    for (int a = 0; a < 3; ++a) {
        tw[a].resize(static_cast<std::size_t>(d[a]) * d[a]);
        for (int k = 0; k < d[a]; ++k)
            for (int r = 0; r < d[a]; ++r)
                tw[a][static_cast<std::size_t>(k) * d[a] + r] =
                    std::polar(1.0, 2.0 * M_PI * k * r / static_cast<double>(d[a]));
    }
    std::vector<double> kern(n, 0.0);
    for (int rz = 0; rz < d[2]; ++rz)
        for (int ry = 0; ry < d[1]; ++ry)
            for (int rx = 0; rx < d[0]; ++rx) {
                std::complex<double> acc = 0.0;
                for (int kz = 0; kz < d[2]; ++kz) {
                    const double fz = freq(kz, 2);
                    for (int ky = 0; ky < d[1]; ++ky) {
                        const double fy = freq(ky, 1);
                        std::complex<double> tyz = tw[2][static_cast<std::size_t>(kz) * d[2] + rz] *
                                                   tw[1][static_cast<std::size_t>(ky) * d[1] + ry];
                        for (int kx = 0; kx < d[0]; ++kx) {
                            const double D = dipole_kernel_value(freq(kx, 0), fy, fz);
                            if (D != 0.0)
                                acc += D * tyz * tw[0][static_cast<std::size_t>(kx) * d[0] + rx];
                        }
                    }
                }
                kern[g.index(rx, ry, rz)] = acc.real() / static_cast<double>(n);
            }
    return kern;
}

// direct periodic spatial convolution with the tabulated kernel
std::vector<double> convolve_direct(const GridSpec& g, const std::vector<float>& chi,
                                    const std::vector<double>& kern, double scale) {
    const auto& d = g.dims;
    std::vector<double> out(g.num_voxels(), 0.0);
    for (int rz = 0; rz < d[2]; ++rz)
        for (int ry = 0; ry < d[1]; ++ry)
            for (int rx = 0; rx < d[0]; ++rx) {
                double acc = 0.0;
                for (int sz = 0; sz < d[2]; ++sz)
                    for (int sy = 0; sy < d[1]; ++sy)
                        for (int sx = 0; sx < d[0]; ++sx) {
                            const int dx = ((rx - sx) % d[0] + d[0]) % d[0];
                            const int dy = ((ry - sy) % d[1] + d[1]) % d[1];
                            const int dz = ((rz - sz) % d[2] + d[2]) % d[2];
                            acc += kern[g.index(dx, dy, dz)] * chi[g.index(sx, sy, sz)];
                        }
                out[g.index(rx, ry, rz)] = scale * acc;
            }
    return out;
}

Volume3D random_chi(Rng& rng, const GridSpec& g) {
    Volume3D chi(g, Units::ppm);
    for (auto& v : chi.data) v = static_cast<float>(rng.uniform(-5, 5));
    return chi;
}

} // namespace

TEST_CASE("axis-aligned kernels sum to zero away from the origin") {
    Rng rng(3);
    for (int it = 0; it < 200; ++it) {
        const double kx = rng.uniform(-1, 1), ky = rng.uniform(-1, 1), kz = rng.uniform(-1, 1);
        if (kx == 0 && ky == 0 && kz == 0) continue;
        // D with the main axis along x, y, z respectively
        const double dsum = dipole_kernel_value(ky, kz, kx) + dipole_kernel_value(kx, kz, ky) +
                            dipole_kernel_value(kx, ky, kz);
        CHECK(std::abs(dsum) < 1e-12);
    }
}

TEST_CASE("zero susceptibility gives zero field") {
    GridSpec g = make_centered_grid({8, 8, 8}, {8, 8, 8});
    Volume3D chi(g, Units::ppm);
    const Volume3D f = dipole_field(chi, FieldScene{});
    for (float v : f.data) CHECK(v == 0.0f);
}

TEST_CASE("field is mean-free by the D(0)=0 convention") {
    Rng rng(4);
    GridSpec g = make_centered_grid({8, 8, 8}, {16, 16, 16});
    for (int it = 0; it < 20; ++it) {
        const Volume3D chi = random_chi(rng, g);
        const Volume3D f = dipole_field(chi, FieldScene{});
        const float m = max_abs(f);
        CHECK(std::abs(mean(f)) <= 1e-6 * (m > 0 ? m : 1.0f));
    }
}

TEST_CASE("dipole_field is linear") {
    Rng rng(5);
    GridSpec g = make_centered_grid({8, 8, 8}, {8, 8, 8});
    FieldScene scene;
    for (int it = 0; it < 10; ++it) {
        const Volume3D c1 = random_chi(rng, g);
        const Volume3D c2 = random_chi(rng, g);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Volume3D mix(g, Units::ppm);
        for (std::size_t i = 0; i < mix.data.size(); ++i)
            mix.data[i] = static_cast<float>(a * c1.data[i] + b * c2.data[i]);
        const Volume3D f1 = dipole_field(c1, scene);
        const Volume3D f2 = dipole_field(c2, scene);
        const Volume3D fm = dipole_field(mix, scene);
        float scale = max_abs(fm);
        for (std::size_t i = 0; i < fm.data.size(); ++i)
            CHECK(std::abs(fm.data[i] - (a * f1.data[i] + b * f2.data[i])) <=
                  1e-6 * (scale > 0 ? scale : 1.0f));
    }
}

TEST_CASE("impulse response matches the direct spatial convolution oracle") {
    // 12^3 here; the acceptance suite runs the full 16^3 version
    GridSpec g = make_centered_grid({12, 12, 12}, {12, 24, 36}); // anisotropic spacing too
    FieldScene scene;
    Volume3D chi(g, Units::ppm);
    const double amplitude = 2.5;
    chi.at(5, 6, 4) = static_cast<float>(amplitude);

    const Volume3D f = dipole_field(chi, scene);
    const auto kern = kernel_by_direct_dft(g);
    const auto oracle = convolve_direct(g, chi.data, kern, scene.larmor_hz_per_ppm());

    double max_err = 0.0, max_val = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        max_err = std::max(max_err, std::abs(f.data[i] - oracle[i]));
        max_val = std::max(max_val, std::abs(oracle[i]));
    }
    CHECK(max_err < 1e-6 * max_val);

    // value at the impulse voxel = larmor * chi * kernel center
    const double center = scene.larmor_hz_per_ppm() * amplitude * kern[g.index(0, 0, 0)];
    CHECK(f.at(5, 6, 4) == doctest::Approx(center).epsilon(1e-6));
}

TEST_CASE("Parseval: spatial field energy equals spectral energy of D*FFT(chi)") {
    Rng rng(6);
    GridSpec g = make_centered_grid({8, 8, 8}, {8, 8, 8});
    FieldScene scene;
    const Volume3D chi = random_chi(rng, g);
    const Volume3D f = dipole_field(chi, scene);

    // spectral side by direct DFT (independent of the FFT library)
    const auto& d = g.dims;
    auto freq = [&](int idx, int axis) {
        const int fr = idx <= d[axis] / 2 ? idx : idx - d[axis];
        return static_cast<double>(fr) / (d[axis] * g.spacing[axis]);
    };
    double spectral = 0.0;
    for (int kz = 0; kz < d[2]; ++kz)
        for (int ky = 0; ky < d[1]; ++ky)
            for (int kx = 0; kx < d[0]; ++kx) {
                std::complex<double> F = 0.0;
                for (int rz = 0; rz < d[2]; ++rz)
                    for (int ry = 0; ry < d[1]; ++ry)
                        for (int rx = 0; rx < d[0]; ++rx)
                            F += static_cast<double>(chi.at(rx, ry, rz)) *
                                 std::polar(1.0, -2.0 * M_PI *
                                                     (double(kx) * rx / d[0] + double(ky) * ry / d[1] +
                                                      double(kz) * rz / d[2]));
                const double D = dipole_kernel_value(freq(kx, 0), freq(ky, 1), freq(kz, 2));
                spectral += std::norm(scene.larmor_hz_per_ppm() * D * F);
            }
    double spatial = 0.0;
    for (float v : f.data) spatial += static_cast<double>(v) * v;
    spectral /= static_cast<double>(g.num_voxels());
    CHECK(spatial == doctest::Approx(spectral).epsilon(1e-6));
}

TEST_CASE("dipole_field validates units and dims") {
    GridSpec g = make_centered_grid({4, 4, 4}, {4, 4, 4});
    Volume3D hz(g, Units::Hz);
    CHECK_THROWS_AS(dipole_field(hz, FieldScene{}), ShapeError);
    Volume3D chi(g, Units::ppm);
    chi.data.resize(10);
    CHECK_THROWS_AS(dipole_field(chi, FieldScene{}), IntegrityError);
}

TEST_CASE("larmor constant: 7 T gives 298.039 Hz per ppm") {
    FieldScene scene;
    CHECK(scene.larmor_hz_per_ppm() == doctest::Approx(42.577 * 7.0).epsilon(1e-12));
}
