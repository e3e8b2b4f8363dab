#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "cforge/fieldlab.hpp"

using namespace cforge;
using namespace cforge::fieldlab;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

ScalarField sample_fn(const GridDomain& dom, auto&& fn) {
    ScalarField f(dom);
    std::vector<int> c(dom.n);
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        dom.unflatten(p, c.data());
        std::vector<double> x(dom.n);
        for (int a = 0; a < dom.n; ++a) x[a] = dom.coord(c[a]);
        f[p] = fn(x);
    }
    return f;
}

ScalarField random_trig(const GridDomain& dom, std::mt19937_64& rng, int max_mode = 3) {
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    ScalarField f(dom, 0.0);
    for (int m = 1; m <= max_mode; ++m)
        for (int axis = 0; axis < dom.n; ++axis) {
            const double a = amp(rng), b = amp(rng);
            const double w = kTau * m / dom.period;
            ScalarField s = synth_plane_wave(dom, w, Eigen::VectorXd::Unit(dom.n, axis), false);
            ScalarField c = synth_plane_wave(dom, w, Eigen::VectorXd::Unit(dom.n, axis), true);
            for (std::size_t p = 0; p < f.size(); ++p) f[p] += a * s[p] + b * c[p];
        }
    return f;
}

}  // namespace

TEST_CASE("spectral derivative of a single harmonic is exact") {
    const GridDomain dom(2, 1.0, 32);
    ScalarField f = sample_fn(dom, [&](const std::vector<double>& x) { return std::sin(kTau * x[0]); });
    ScalarField df = differentiate(f, 0, DiffScheme::Spectral);
    ScalarField expect = sample_fn(dom, [&](const std::vector<double>& x) { return kTau * std::cos(kTau * x[0]); });
    double err = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p) err = std::max(err, std::abs(df[p] - expect[p]));
    CHECK(err < 1e-10);
}

TEST_CASE("derivative of a constant field is zero") {
    const GridDomain dom(3, 2.0, 8);
    ScalarField f(dom, 3.25);
    for (int a = 0; a < 3; ++a) {
        CHECK(sup_norm(differentiate(f, a, DiffScheme::Spectral)) < 1e-13);
        CHECK(sup_norm(differentiate(f, a, DiffScheme::Central4)) < 1e-13);
    }
}

TEST_CASE("central4 error decays at fourth order") {
    auto max_err = [&](int N) {
        const GridDomain dom(1, 1.0, N);
        const int k = N / 4;  // half-Nyquist
        const double w = kTau * k;
        ScalarField f = synth_plane_wave(dom, w, Eigen::VectorXd::Ones(1), false);
        ScalarField df = differentiate(f, 0, DiffScheme::Central4);
        ScalarField expect = synth_plane_wave(dom, w, Eigen::VectorXd::Ones(1), true);
        double err = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p) err = std::max(err, std::abs(df[p] - w * expect[p]));
        return err;
    };
    // same physical frequency on both grids: k at half-Nyquist of the coarse grid
    const GridDomain coarse(1, 1.0, 64);
    const int k = 16;
    const double w = kTau * k;
    auto err_for = [&](int N) {
        const GridDomain dom(1, 1.0, N);
        ScalarField f = synth_plane_wave(dom, w, Eigen::VectorXd::Ones(1), false);
        ScalarField df = differentiate(f, 0, DiffScheme::Central4);
        ScalarField expect = synth_plane_wave(dom, w, Eigen::VectorXd::Ones(1), true);
        double err = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p) err = std::max(err, std::abs(df[p] - w * expect[p]));
        return err;
    };
    (void)max_err;
    const double ratio = err_for(64) / err_for(128);
    CHECK(ratio > 12.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("antiderivative then derivative round-trips band-limited fields") {
    const GridDomain dom(2, 1.0, 32);
    std::mt19937_64 rng(5);
    ScalarField f = random_trig(dom, rng);
    // remove the mean so the antiderivative is well-defined per line
    ScalarField fd = differentiate(f, 0);
    ScalarField back = differentiate(spectral_antiderivative(fd, 0), 0);
    double err = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p) err = std::max(err, std::abs(back[p] - fd[p]));
    CHECK(err < 1e-10);
}

TEST_CASE("mollify preserves constants exactly") {
    const GridDomain dom(2, 1.0, 32);
    ScalarField f(dom, -1.75);
    ScalarField g = mollify(f, 0.1);
    for (std::size_t p = 0; p < g.size(); ++p) CHECK(g[p] == doctest::Approx(-1.75).epsilon(1e-13));
}

TEST_CASE("mollifier kernel has unit mass") {
    const GridDomain dom(2, 1.0, 64);
    CHECK(std::abs(mollifier_mass(dom, 0.13) - 1.0) < 1e-13);
}

TEST_CASE("mollification error bounded by ell * [f]_1") {
    const GridDomain dom(2, 1.0, 64);
    ScalarField f = synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(2, 0), false);
    const double ell = 1.0 / 64.0;
    ScalarField g = mollify(f, ell);
    double diff = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p) diff = std::max(diff, std::abs(f[p] - g[p]));
    CHECK(diff <= ell * kTau);  // sup |f'| = 2*pi
}

TEST_CASE("mollification is sup-norm nonincreasing") {
    std::mt19937_64 rng(11);
    const GridDomain dom(2, 1.0, 32);
    for (int trial = 0; trial < 10; ++trial) {
        ScalarField f = random_trig(dom, rng);
        ScalarField g = mollify(f, 0.07 + 0.01 * trial);
        CHECK(sup_norm(g) <= sup_norm(f) * (1.0 + 1e-12));
    }
}

TEST_CASE("product estimate: commutator of mollification is O(ell^2)") {
    const GridDomain dom(1, 1.0, 256);
    ScalarField f = synth_plane_wave(dom, kTau, Eigen::VectorXd::Ones(1), false);
    auto commutator = [&](double ell) {
        ScalarField fg(dom);
        for (std::size_t p = 0; p < f.size(); ++p) fg[p] = f[p] * f[p];
        ScalarField lhs = mollify(fg, ell);
        ScalarField mf = mollify(f, ell);
        double err = 0.0;
        for (std::size_t p = 0; p < f.size(); ++p)
            err = std::max(err, std::abs(lhs[p] - mf[p] * mf[p]));
        return err;
    };
    const double e1 = commutator(0.02), e2 = commutator(0.04);
    const double c1 = e1 / (0.02 * 0.02), c2 = e2 / (0.04 * 0.04);
    MESSAGE("measured product-estimate constants C = ", c1, ", ", c2);
    CHECK(c2 / c1 < 3.0);  // consistent with the quadratic law
    CHECK(c1 < 100.0);
}

TEST_CASE("mollify rejects kernels too large for the torus") {
    const GridDomain dom(2, 1.0, 32);
    ScalarField f(dom, 1.0);
    CHECK_THROWS_AS(mollify(f, 0.3), PreconditionError);
}

TEST_CASE("pullback of the inclusion is the identity metric") {
    const GridDomain dom(3, 1.0, 8);
    ImmersionField u = ImmersionField::inclusion(dom);
    u.refresh_gradient();
    MetricField g = pullback_metric(u);
    for (std::size_t p = 0; p < g.points(); ++p)
        CHECK((g.matrix(p) - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-13);
}

TEST_CASE("pullback of a scaled inclusion scales quadratically") {
    const GridDomain dom(2, 1.0, 8);
    ImmersionField u = ImmersionField::inclusion(dom, 0.5);
    u.refresh_gradient();
    MetricField g = pullback_metric(u);
    for (std::size_t p = 0; p < g.points(); ++p)
        CHECK((g.matrix(p) - 0.25 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-13);
}

TEST_CASE("pullback of a graph matches the closed form") {
    const GridDomain dom(2, 1.0, 64);
    const double eps = 0.05;
    ImmersionField u = ImmersionField::inclusion(dom);
    std::vector<int> c(2);
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        dom.unflatten(p, c.data());
        u.periodic().at(p)[2] = eps * std::sin(kTau * dom.coord(c[0]));
    }
    u.refresh_gradient();
    MetricField g = pullback_metric(u);
    double err = 0.0;
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        dom.unflatten(p, c.data());
        const double d = eps * kTau * std::cos(kTau * dom.coord(c[0]));
        Eigen::Matrix2d expect;
        expect << 1.0 + d * d, 0.0, 0.0, 1.0;
        err = std::max(err, (g.matrix(p) - expect).norm());
    }
    CHECK(err < 1e-9);
}

TEST_CASE("pullback is positive semidefinite, definite iff full rank") {
    const GridDomain dom(2, 1.0, 16);
    ImmersionField u = ImmersionField::inclusion(dom, 0.7);
    u.refresh_gradient();
    CHECK(pullback_metric(u).min_eigenvalue() > 0.0);
    ImmersionField flat(dom, 4);  // constant map
    flat.refresh_gradient();
    CHECK(pullback_metric(flat).min_eigenvalue() >= -1e-15);
    CHECK(pullback_metric(flat).min_eigenvalue() < 1e-15);
}

TEST_CASE("norms of simple fields") {
    const GridDomain dom(2, 1.0, 64);
    ScalarField c(dom, -2.5);
    CHECK(seminorm(c, 0) == doctest::Approx(2.5));
    CHECK(seminorm(c, 1) < 1e-12);
    CHECK(holder_seminorm(c, 0.5) < 1e-12);

    ScalarField f = synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(2, 0), false);
    CHECK(seminorm(f, 1) == doctest::Approx(kTau).epsilon(1e-6));
}

TEST_CASE("holder estimator agrees with a one-dimensional oracle") {
    const GridDomain dom(1, 1.0, 256);
    ScalarField f = synth_plane_wave(dom, kTau, Eigen::VectorXd::Ones(1), false);
    const double theta = 0.5;
    // oracle: max over dyadic separations of 2 sin(pi k h 2^j) / sep^theta,
    // the exact sup over x of |sin(a(x+s)) - sin(ax)|.
    double oracle = 0.0;
    for (int j = 0; (1 << j) <= 128; ++j) {
        const double sep = (1 << j) / 256.0;
        oracle = std::max(oracle, 2.0 * std::abs(std::sin(kTau * sep / 2.0)) / std::pow(sep, theta));
    }
    const double est = holder_seminorm(f, theta);
    CHECK(est == doctest::Approx(oracle).epsilon(1e-2));
}

TEST_CASE("deficit of an isometric immersion vanishes") {
    const GridDomain dom(2, 1.0, 8);
    ImmersionField u = ImmersionField::inclusion(dom);
    u.refresh_gradient();
    MetricField g = pullback_metric(u);
    CHECK(sup_norm(deficit(g, u)) < 1e-14);
}

TEST_CASE("deficit of the half inclusion against the identity") {
    const GridDomain dom(2, 1.0, 8);
    ImmersionField u = ImmersionField::inclusion(dom, 0.5);
    u.refresh_gradient();
    MetricField g(dom);
    for (std::size_t p = 0; p < g.points(); ++p)
        g.set_matrix(p, Eigen::MatrixXd::Identity(2, 2));
    MetricField d = deficit(g, u);
    for (std::size_t p = 0; p < d.points(); ++p)
        CHECK((d.matrix(p) - 0.75 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-13);
    CHECK(sup_norm(d) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(sup_norm(d, MatrixNorm::Frobenius) == doctest::Approx(0.75 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("snapshot round-trips are bit exact") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cforge_test_snap";
    fs::create_directories(dir);
    std::mt19937_64 rng(17);
    const GridDomain dom(2, 1.0, 16);

    ScalarField f = random_trig(dom, rng);
    const std::string fp = (dir / "f.cfield").string();
    save_snapshot(fp, f);
    ScalarField f2 = load_scalar_snapshot(fp);
    CHECK(std::memcmp(f.data().data(), f2.data().data(), f.data().size() * 8) == 0);

    MetricField m(dom);
    std::uniform_real_distribution<double> unif(-1, 1);
    for (double& v : m.data()) v = unif(rng);
    const std::string mp = (dir / "m.cfield").string();
    save_snapshot(mp, m);
    MetricField m2 = load_metric_snapshot(mp);
    CHECK(std::memcmp(m.data().data(), m2.data().data(), m.data().size() * 8) == 0);

    ImmersionField u = ImmersionField::inclusion(dom, 0.8);
    for (double& v : u.periodic().data()) v = unif(rng);
    const std::string up = (dir / "u.cfield").string();
    save_snapshot(up, u);
    ImmersionField u2 = load_immersion_snapshot(up);
    CHECK(u.affine() == u2.affine());
    CHECK(std::memcmp(u.periodic().data().data(), u2.periodic().data().data(),
                      u.periodic().data().size() * 8) == 0);

    CHECK_THROWS_AS(load_metric_snapshot(fp), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("nyquist guard") {
    const GridDomain dom(2, 1.0, 64);
    CHECK_NOTHROW(check_nyquist(nyquist_limit(dom) * 0.99, dom, "test"));
    CHECK_THROWS_AS(check_nyquist(nyquist_limit(dom) * 1.01, dom, "test"), PreconditionError);
}

TEST_CASE("snapped frequencies are commensurate and spectrally clean") {
    const GridDomain dom(2, 1.0, 64);
    Eigen::VectorXd pair(2);
    pair << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const double lam = snap_frequency(40.0, pair, dom);
    // wave must be exactly periodic: compare against its own torus translate
    ScalarField w = synth_plane_wave(dom, lam, pair, false);
    ScalarField dw = differentiate(w, 0);
    ScalarField expect(dom);
    std::vector<int> c(2);
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        dom.unflatten(p, c.data());
        const double phase = lam * (dom.coord(c[0]) + dom.coord(c[1])) / std::sqrt(2.0);
        expect[p] = lam / std::sqrt(2.0) * std::cos(phase);
    }
    double err = 0.0;
    for (std::size_t p = 0; p < w.size(); ++p) err = std::max(err, std::abs(dw[p] - expect[p]));
    CHECK(err < 1e-9);
}
