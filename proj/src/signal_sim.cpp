#include "b0cast/signal_sim.hpp"

#include <cmath>

#include "b0cast/fieldmap.hpp"

namespace b0cast {

namespace {

// Pad grid by half the FOV per side (dims double, same spacing).
GridSpec padded_grid(const GridSpec& g) {
    GridSpec p = g;
    for (int a = 0; a < 3; ++a) {
        const int pad = g.dims[a] / 2;
        p.dims[a] = g.dims[a] + 2 * pad;
        p.origin[a] = g.origin[a] - pad * g.spacing[a];
    }
    return p;
}

Volume3D crop_to_grid(const Volume3D& big, const GridSpec& out) {
    Volume3D res(out, big.units);
    // offset of out's voxel (0,0,0) inside big (lattice-aligned by construction)
    Dims3 off;
    for (int a = 0; a < 3; ++a)
        off[a] = static_cast<int>(std::llround((out.origin[a] - big.grid.origin[a]) / out.spacing[a]));
    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i)
                res.at(i, j, k) = big.at(i + off[0], j + off[1], k + off[2]);
    return res;
}

} // namespace

SceneResult scene_at_pose(const Phantom& phantom, const RigidPose& pose, const FieldScene& scene,
                          double air_chi_ppm) {
    const GridSpec grid = phantom.chi.grid;

    auto [chi_moved, chi_valid] = apply_rigid(phantom.chi, pose, grid);
    // out-of-view voxels are air, not vacuum
    for (std::size_t i = 0; i < chi_moved.data.size(); ++i)
        if (!chi_valid.data[i]) chi_moved.data[i] = static_cast<float>(air_chi_ppm);

    auto [anat_moved, anat_valid] = apply_rigid(phantom.anat, pose, grid);
    (void)anat_valid; // anat is 0 in air; zero fill is already correct

    auto [mask_moved_f, mask_valid] = apply_rigid(mask_to_volume(phantom.mask), pose, grid);
    Mask3D mask_moved = volume_to_mask(mask_moved_f, 0.5f);
    for (std::size_t i = 0; i < mask_moved.data.size(); ++i)
        if (!mask_valid.data[i]) mask_moved.data[i] = 0;

    // air padding before the periodic convolution
    const GridSpec big = padded_grid(grid);
    Volume3D chi_padded(big, Units::ppm, static_cast<float>(air_chi_ppm));
    Dims3 off;
    for (int a = 0; a < 3; ++a)
        off[a] = static_cast<int>(std::llround((grid.origin[a] - big.origin[a]) / grid.spacing[a]));
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i)
                chi_padded.at(i + off[0], j + off[1], k + off[2]) = chi_moved.at(i, j, k);

    Volume3D field_big = dipole_field(chi_padded, scene);
    Volume3D field = crop_to_grid(field_big, grid);
    // per-position demodulation over the nominal FOV
    const double m = mean(field);
    for (auto& v : field.data) v = static_cast<float>(v - m);

    return {std::move(anat_moved), std::move(field), std::move(mask_moved)};
}

ComplexVolume simulate_multiecho(const Volume3D& field_hz, const Volume3D& anat,
                                 const std::vector<double>& echoes_ms, double noise_sigma,
                                 Rng& rng) {
    if (!(field_hz.grid == anat.grid))
        throw ShapeError("simulate_multiecho: field and anat grids differ");
    if (field_hz.units != Units::Hz)
        throw ShapeError("simulate_multiecho: field must be in Hz");
    if (echoes_ms.empty()) throw ShapeError("simulate_multiecho: echo list is empty");
    for (std::size_t e = 1; e < echoes_ms.size(); ++e)
        if (!(echoes_ms[e] > echoes_ms[e - 1]))
            throw ShapeError("simulate_multiecho: echoes must be strictly increasing");
    if (noise_sigma < 0.0) throw ShapeError("simulate_multiecho: negative noise sigma");

    ComplexVolume out;
    out.grid = field_hz.grid;
    out.echoes_ms = echoes_ms;
    const std::size_t n = field_hz.grid.num_voxels();
    for (double te_ms : echoes_ms) {
        const double te_s = te_ms * 1e-3;
        std::vector<std::complex<float>> echo(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double phase = 2.0 * M_PI * field_hz.data[i] * te_s;
            double re = anat.data[i] * std::cos(phase);
            double im = anat.data[i] * std::sin(phase);
            if (noise_sigma > 0.0) {
                re += noise_sigma * rng.normal();
                im += noise_sigma * rng.normal();
            }
            echo[i] = {static_cast<float>(re), static_cast<float>(im)};
        }
        out.echo_data.push_back(std::move(echo));
    }
    return out;
}

Volume3D emulate_navigator(const Volume3D& gt_field, const Volume3D& anat, Dims3 factor,
                           double noise_sigma, const std::vector<double>& echoes_epi_ms,
                           Rng& rng) {
    if (echoes_epi_ms.size() != 2)
        throw ShapeError("emulate_navigator: needs exactly 2 EPI echoes");
    const Volume3D field_lr = block_downsample(gt_field, factor);
    const Volume3D anat_lr = block_downsample(anat, factor);
    const ComplexVolume echoes = simulate_multiecho(field_lr, anat_lr, echoes_epi_ms, noise_sigma, rng);
    const FieldMapResult est = hermitian_b0(echoes);
    return resample_trilinear(est.field, gt_field.grid, OutsidePolicy::ClampToEdge);
}

} // namespace b0cast
