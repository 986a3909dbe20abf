#include "b0cast/fieldmap.hpp"

#include <algorithm>
#include <cmath>

namespace b0cast {

FieldMapResult hermitian_b0(const ComplexVolume& echoes) {
    echoes.validate();
    if (echoes.num_echoes() != 2)
        throw ShapeError("hermitian_b0: expected exactly 2 echoes, got " +
                         std::to_string(echoes.num_echoes()));
    const double dte_s = (echoes.echoes_ms[1] - echoes.echoes_ms[0]) * 1e-3;
    if (!(dte_s > 0.0)) throw ShapeError("hermitian_b0: echo spacing must be positive");

    FieldMapResult res;
    res.field = Volume3D(echoes.grid, Units::Hz);
    res.reliability = Volume3D(echoes.grid, Units::dimensionless);
    res.mask = Mask3D(echoes.grid);

    const auto& s1 = echoes.echo_data[0];
    const auto& s2 = echoes.echo_data[1];
    const std::size_t n = echoes.grid.num_voxels();
    double max_w = 0.0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::complex<double> a(s1[i].real(), s1[i].imag());
        const std::complex<double> b(s2[i].real(), s2[i].imag());
        const std::complex<double> h = std::conj(a) * b;
        res.field.data[i] = static_cast<float>(std::arg(h) / (2.0 * M_PI * dte_s));
        w[i] = std::abs(a) * std::abs(b);
        max_w = std::max(max_w, w[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        res.reliability.data[i] = max_w > 0.0 ? static_cast<float>(w[i] / max_w) : 0.0f;
        res.mask.data[i] = w[i] > 0.0 ? 1 : 0;
    }
    return res;
}

UnwrapResult unwrap_temporal(const ComplexVolume& echoes, const FieldMapResult& guide) {
    echoes.validate();
    if (!(guide.field.grid == echoes.grid))
        throw ShapeError("unwrap_temporal: guide grid does not match echoes");

    UnwrapResult res;
    res.residual_ok = Mask3D(echoes.grid, true);
    const std::size_t n = echoes.grid.num_voxels();
    for (std::size_t e = 0; e < echoes.num_echoes(); ++e) {
        Volume3D ph(echoes.grid, Units::rad);
        const double te_s = echoes.echoes_ms[e] * 1e-3;
        const auto& s = echoes.echo_data[e];
        for (std::size_t i = 0; i < n; ++i) {
            const double measured = std::atan2(s[i].imag(), s[i].real());
            const double predicted = 2.0 * M_PI * guide.field.data[i] * te_s;
            const double k = std::round((predicted - measured) / (2.0 * M_PI));
            const double unwrapped = measured + 2.0 * M_PI * k;
            ph.data[i] = static_cast<float>(unwrapped);
            if (std::abs(unwrapped - predicted) > M_PI * (1.0 + 1e-9))
                res.residual_ok.data[i] = 0;
        }
        res.phases_rad.push_back(std::move(ph));
    }
    return res;
}

FieldMapResult fit_multiecho(const std::vector<Volume3D>& unwrapped_phases,
                             const std::vector<double>& echoes_ms,
                             const std::vector<Volume3D>& weights) {
    const std::size_t ne = echoes_ms.size();
    if (unwrapped_phases.size() < 2)
        throw ShapeError("fit_multiecho: needs at least 2 echoes");
    if (unwrapped_phases.size() != ne)
        throw ShapeError("fit_multiecho: phase count does not match echo count");
    if (weights.size() != 1 && weights.size() != ne)
        throw ShapeError("fit_multiecho: weights must hold 1 volume or one per echo");
    const GridSpec grid = unwrapped_phases[0].grid;
    for (const auto& p : unwrapped_phases)
        if (!(p.grid == grid)) throw ShapeError("fit_multiecho: phase grids differ");
    for (const auto& w : weights) {
        if (!(w.grid == grid)) throw ShapeError("fit_multiecho: weights grid differs");
        for (float v : w.data)
            if (v < 0.0f) throw ShapeError("fit_multiecho: negative weight");
    }

    FieldMapResult res;
    res.field = Volume3D(grid, Units::Hz);
    res.reliability = Volume3D(grid, Units::dimensionless);
    res.mask = Mask3D(grid, true);

    std::vector<double> x(ne); // 2*pi*TE in seconds: slope is then Hz
    for (std::size_t e = 0; e < ne; ++e) x[e] = 2.0 * M_PI * echoes_ms[e] * 1e-3;

    const std::size_t n = grid.num_voxels();
    auto weight_at = [&](std::size_t e, std::size_t i) {
        return static_cast<double>(weights[weights.size() == 1 ? 0 : e].data[i]);
    };
    double max_mean_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            const double w = weight_at(e, i);
            const double y = unwrapped_phases[e].data[i];
            sw += w;
            swx += w * x[e];
            swy += w * y;
            swxx += w * x[e] * x[e];
            swxy += w * x[e] * y;
        }
        const double denom = sw * swxx - swx * swx;
        if (sw <= 0.0 || denom <= 0.0) {
            res.field.data[i] = 0.0f;
            res.mask.data[i] = 0;
        } else {
            res.field.data[i] = static_cast<float>((sw * swxy - swx * swy) / denom);
        }
        const double mean_w = sw / static_cast<double>(ne);
        res.reliability.data[i] = static_cast<float>(mean_w);
        max_mean_w = std::max(max_mean_w, mean_w);
    }
    if (max_mean_w > 0.0)
        for (auto& v : res.reliability.data)
            v = static_cast<float>(v / max_mean_w);
    return res;
}

FieldMapResult estimate_fieldmap(const ComplexVolume& echoes) {
    echoes.validate();
    if (echoes.num_echoes() == 2) return hermitian_b0(echoes);

    ComplexVolume pair;
    pair.grid = echoes.grid;
    pair.echoes_ms = {echoes.echoes_ms[0], echoes.echoes_ms[1]};
    pair.echo_data = {echoes.echo_data[0], echoes.echo_data[1]};
    const FieldMapResult guide = hermitian_b0(pair);

    const UnwrapResult unwrapped = unwrap_temporal(echoes, guide);

    std::vector<Volume3D> weights;
    const std::size_t n = echoes.grid.num_voxels();
    for (std::size_t e = 0; e < echoes.num_echoes(); ++e) {
        Volume3D w(echoes.grid, Units::dimensionless);
        for (std::size_t i = 0; i < n; ++i)
            w.data[i] = static_cast<float>(std::norm(
                std::complex<double>(echoes.echo_data[e][i].real(), echoes.echo_data[e][i].imag())));
        weights.push_back(std::move(w));
    }
    return fit_multiecho(unwrapped.phases_rad, echoes.echoes_ms, weights);
}

} // namespace b0cast
