#include <doctest.h>

#include <cmath>

#include "b0cast/fieldmap.hpp"
#include "b0cast/phantom.hpp"
#include "b0cast/rng.hpp"
#include "b0cast/signal_sim.hpp"

using namespace b0cast;

namespace {

ComplexVolume make_pair(const Volume3D& field, const Volume3D& anat, double te1, double te2) {
    Rng rng(0);
    return simulate_multiecho(field, anat, {te1, te2}, 0.0, rng);
}

} // namespace

TEST_CASE("hermitian_b0: equal unit echoes give 0 Hz") {
    ComplexVolume cv;
    cv.grid = make_centered_grid({2, 2, 2}, {2, 2, 2});
    cv.echoes_ms = {3.8, 4.8};
    cv.echo_data.assign(2, std::vector<std::complex<float>>(8, {1.0f, 0.0f}));
    const FieldMapResult r = hermitian_b0(cv);
    for (float v : r.field.data) CHECK(v == 0.0f);
    for (float v : r.reliability.data) CHECK(v == 1.0f);
}

TEST_CASE("hermitian_b0: exact inverse of the simulator within the alias-free band") {
    GridSpec g = make_centered_grid({6, 6, 6}, {6, 6, 6});
    Rng rng(17);
    Volume3D field(g, Units::Hz);
    for (auto& v : field.data) v = static_cast<float>(rng.uniform(-499, 499));
    Volume3D anat(g, Units::dimensionless, 1.0f);
    const FieldMapResult r = hermitian_b0(make_pair(field, anat, 3.8, 4.8));
    for (std::size_t i = 0; i < field.data.size(); ++i)
        CHECK(std::abs(r.field.data[i] - field.data[i]) < 1e-3); // f32 signal storage
}

TEST_CASE("hermitian_b0: 100 Hz recovered through TE 3.8/4.8") {
    GridSpec g = make_centered_grid({2, 2, 2}, {2, 2, 2});
    Volume3D field(g, Units::Hz, 100.0f);
    Volume3D anat(g, Units::dimensionless, 1.0f);
    const FieldMapResult r = hermitian_b0(make_pair(field, anat, 3.8, 4.8));
    for (float v : r.field.data) CHECK(v == doctest::Approx(100.0).epsilon(1e-5));
}

TEST_CASE("hermitian_b0: 600 Hz aliases to -400 Hz") {
    GridSpec g = make_centered_grid({1, 1, 1}, {1, 1, 1});
    Volume3D field(g, Units::Hz, 600.0f);
    Volume3D anat(g, Units::dimensionless, 1.0f);
    const FieldMapResult r = hermitian_b0(make_pair(field, anat, 3.8, 4.8));
    CHECK(r.field.data[0] == doctest::Approx(-400.0).epsilon(1e-4));
}

TEST_CASE("hermitian_b0: rejects wrong echo counts") {
    ComplexVolume cv;
    cv.grid = make_centered_grid({1, 1, 1}, {1, 1, 1});
    cv.echoes_ms = {3.0, 6.0, 9.0};
    cv.echo_data.assign(3, std::vector<std::complex<float>>(1, {1.0f, 0.0f}));
    CHECK_THROWS_AS(hermitian_b0(cv), ShapeError);
}

TEST_CASE("unwrap_temporal: zero field leaves phases unchanged") {
    GridSpec g = make_centered_grid({3, 3, 3}, {3, 3, 3});
    Volume3D field(g, Units::Hz);
    Volume3D anat(g, Units::dimensionless, 1.0f);
    Rng rng(0);
    const ComplexVolume cv = simulate_multiecho(field, anat, {3, 6, 9, 12, 15}, 0.0, rng);
    FieldMapResult guide;
    guide.field = field;
    guide.reliability = anat;
    guide.mask = Mask3D(g, true);
    const UnwrapResult u = unwrap_temporal(cv, guide);
    for (const auto& ph : u.phases_rad)
        for (float v : ph.data) CHECK(v == doctest::Approx(0.0));
    CHECK(u.residual_ok.count_true() == g.num_voxels());
}

TEST_CASE("unwrap_temporal: k=1 wrap at 100 Hz, TE 12 ms") {
    // true phase 2*pi*1.2 = 7.5398 rad; measured (wrapped) 1.2566 rad
    GridSpec g = make_centered_grid({1, 1, 1}, {1, 1, 1});
    Volume3D field(g, Units::Hz, 100.0f);
    Volume3D anat(g, Units::dimensionless, 1.0f);
    Rng rng(0);
    const ComplexVolume cv = simulate_multiecho(field, anat, {3.0, 12.0}, 0.0, rng);
    const double measured = std::atan2(cv.echo_data[1][0].imag(), cv.echo_data[1][0].real());
    CHECK(measured == doctest::Approx(2 * M_PI * 1.2 - 2 * M_PI).epsilon(1e-5));
    FieldMapResult guide;
    guide.field = field;
    guide.reliability = anat;
    guide.mask = Mask3D(g, true);
    const UnwrapResult u = unwrap_temporal(cv, guide);
    CHECK(u.phases_rad[1].data[0] == doctest::Approx(2 * M_PI * 1.2).epsilon(1e-5));
}

TEST_CASE("unwrap_temporal: closed loop over the 5-echo protocol within +-160 Hz") {
    GridSpec g = make_centered_grid({5, 5, 5}, {5, 5, 5});
    Rng rng(23);
    Volume3D field(g, Units::Hz);
    for (auto& v : field.data) v = static_cast<float>(rng.uniform(-160, 160));
    Volume3D anat(g, Units::dimensionless, 1.0f);
    const std::vector<double> tes = {3, 6, 9, 12, 15};
    const ComplexVolume cv = simulate_multiecho(field, anat, tes, 0.0, rng);
    FieldMapResult guide;
    guide.field = field;
    guide.reliability = anat;
    guide.mask = Mask3D(g, true);
    const UnwrapResult u = unwrap_temporal(cv, guide);
    for (std::size_t e = 0; e < tes.size(); ++e)
        for (std::size_t i = 0; i < field.data.size(); ++i)
            CHECK(std::abs(u.phases_rad[e].data[i] -
                           2 * M_PI * field.data[i] * tes[e] * 1e-3) < 1e-4);
}

TEST_CASE("fit_multiecho: exact line recovered") {
    GridSpec g = make_centered_grid({2, 2, 2}, {2, 2, 2});
    const std::vector<double> tes = {3, 6, 9, 12, 15};
    const double f = 42.0;
    std::vector<Volume3D> phases;
    for (double te : tes) {
        Volume3D p(g, Units::rad, static_cast<float>(2 * M_PI * f * te * 1e-3));
        phases.push_back(std::move(p));
    }
    std::vector<Volume3D> w = {Volume3D(g, Units::dimensionless, 1.0f)};
    const FieldMapResult r = fit_multiecho(phases, tes, w);
    for (float v : r.field.data) CHECK(v == doctest::Approx(42.0).epsilon(1e-9));
}

TEST_CASE("fit_multiecho: global phase offset is absorbed by the intercept") {
    GridSpec g = make_centered_grid({2, 2, 2}, {2, 2, 2});
    const std::vector<double> tes = {3, 6, 9, 12, 15};
    const double f = 42.0, offset = 1.234;
    std::vector<Volume3D> phases;
    for (double te : tes)
        phases.emplace_back(g, Units::rad, static_cast<float>(2 * M_PI * f * te * 1e-3 + offset));
    std::vector<Volume3D> w = {Volume3D(g, Units::dimensionless, 1.0f)};
    const FieldMapResult r = fit_multiecho(phases, tes, w);
    for (float v : r.field.data) CHECK(v == doctest::Approx(42.0).epsilon(1e-6));
}

TEST_CASE("fit_multiecho: invariant to uniform weight scaling; zero weights flagged") {
    GridSpec g = make_centered_grid({2, 1, 1}, {2, 1, 1});
    const std::vector<double> tes = {3, 6, 9};
    std::vector<Volume3D> phases;
    for (double te : tes) {
        Volume3D p(g, Units::rad);
        p.data = {static_cast<float>(2 * M_PI * 10 * te * 1e-3),
                  static_cast<float>(2 * M_PI * 20 * te * 1e-3)};
        phases.push_back(std::move(p));
    }
    Volume3D w1(g, Units::dimensionless, 1.0f);
    Volume3D w7(g, Units::dimensionless, 7.0f);
    const FieldMapResult a = fit_multiecho(phases, tes, {w1});
    const FieldMapResult b = fit_multiecho(phases, tes, {w7});
    CHECK(a.field.data == b.field.data);

    Volume3D wz(g, Units::dimensionless, 1.0f);
    wz.data[1] = 0.0f;
    const FieldMapResult c = fit_multiecho(phases, tes, {wz});
    CHECK(c.field.data[1] == 0.0f);
    CHECK_FALSE(c.mask.data[1]);
    CHECK(c.mask.data[0]);
}

TEST_CASE("estimate_fieldmap: closed loop on the default phantom, RMS < 0.1 Hz in mask") {
    const GridSpec g = make_centered_grid({32, 32, 32}, {220, 220, 220});
    const Phantom ph = make_phantom(PhantomSpec::desk_default(g), 31);
    FieldScene scene;
    const SceneResult sr = scene_at_pose(ph, RigidPose{}, scene, 0.36);
    Rng rng(0);
    // anat floor keeps phase defined everywhere (air has no signal otherwise)
    Volume3D anat = sr.anat;
    for (auto& v : anat.data) v = std::max(v, 0.05f);
    const ComplexVolume cv = simulate_multiecho(sr.gt_field, anat, {3, 6, 9, 12, 15}, 0.0, rng);
    const FieldMapResult est = estimate_fieldmap(cv);
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < est.field.data.size(); ++i) {
        if (!sr.mask.data[i]) continue;
        const double d = est.field.data[i] - sr.gt_field.data[i];
        ss += d * d;
        ++n;
    }
    REQUIRE(n > 0);
    CHECK(std::sqrt(ss / n) < 0.1);
}

TEST_CASE("Monte-Carlo: 5-echo estimates beat dual-echo under white noise") {
    GridSpec g = make_centered_grid({6, 6, 6}, {6, 6, 6});
    Volume3D field(g, Units::Hz, 40.0f);
    Volume3D anat(g, Units::dimensionless, 1.0f);
    const double sigma = 0.05;
    double var5 = 0.0, var2 = 0.0;
    std::size_t n = 0;
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(1000 + trial);
        const ComplexVolume five = simulate_multiecho(field, anat, {3, 6, 9, 12, 15}, sigma, rng);
        const ComplexVolume two = simulate_multiecho(field, anat, {3, 6}, sigma, rng);
        const FieldMapResult r5 = estimate_fieldmap(five);
        const FieldMapResult r2 = hermitian_b0(two);
        for (std::size_t i = 0; i < field.data.size(); ++i) {
            var5 += std::pow(r5.field.data[i] - 40.0, 2);
            var2 += std::pow(r2.field.data[i] - 40.0, 2);
            ++n;
        }
    }
    CHECK(var5 / n < var2 / n);
}
