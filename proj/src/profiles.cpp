#include "cforge/profiles.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace cforge::profiles {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

/// Catmull-Rom interpolation through p1, p2 at parameter u in [0,1].
double catmull_rom(double p0, double p1, double p2, double p3, double u) {
    const double a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    const double b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    const double c = -0.5 * p0 + 0.5 * p2;
    return ((a * u + b) * u + c) * u + p1;
}

/// Zero-mean spectral antiderivative of uniformly sampled 2*pi-periodic data.
std::vector<double> periodic_antiderivative(const std::vector<double>& g) {
    const int n = static_cast<int>(g.size());
    std::vector<double> out(n);
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(n, real, cplx, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(n, cplx, real, FFTW_ESTIMATE);
    for (int i = 0; i < n; ++i) real[i] = g[i];
    fftw_execute(fwd);
    cplx[0][0] = 0.0;
    cplx[0][1] = 0.0;
    for (int k = 1; k <= n / 2; ++k) {
        if (k == n / 2) {
            cplx[k][0] = 0.0;
            cplx[k][1] = 0.0;
            continue;
        }
        const double re = cplx[k][0], im = cplx[k][1];
        cplx[k][0] = im / k;
        cplx[k][1] = -re / k;
    }
    fftw_execute(bwd);
    for (int i = 0; i < n; ++i) out[i] = real[i] / n;
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(cplx);
    return out;
}

double interp_row(const std::vector<double>& tab, int t_samples, int row_base, double t) {
    double u = t / kTau * t_samples;
    u -= std::floor(u / t_samples) * t_samples;
    int j = static_cast<int>(std::floor(u));
    if (j >= t_samples) j -= t_samples;
    const double frac = u - j;
    auto at = [&](int idx) { return tab[row_base + ((idx % t_samples) + t_samples) % t_samples]; };
    return catmull_rom(at(j - 1), at(j), at(j + 1), at(j + 2), frac);
}

/// Subtracts the residual (quadrature-level) mean and returns the
/// antiderivative normalized to vanish at t = 0.
void anchored_antiderivative(std::vector<double>& row, std::vector<double>& out) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (double& v : row) v -= mean;
    out = periodic_antiderivative(row);
    const double g0 = out[0];
    for (double& v : out) v -= g0;
}

}  // namespace

PeriodicProfile::PeriodicProfile(std::vector<double> samples) : v_(std::move(samples)) {
    require_pre(v_.size() >= 8, "PeriodicProfile: need at least 8 samples");
    double s = 0.0;
    for (double x : v_) s += x;
    mean_ = s / static_cast<double>(v_.size());
}

PeriodicProfile PeriodicProfile::harmonic_sin(int samples) {
    std::vector<double> v(samples);
    for (int i = 0; i < samples; ++i) v[i] = std::sin(kTau * i / samples);
    return PeriodicProfile(std::move(v));
}

PeriodicProfile PeriodicProfile::harmonic_cos(int samples) {
    std::vector<double> v(samples);
    for (int i = 0; i < samples; ++i) v[i] = std::cos(kTau * i / samples);
    return PeriodicProfile(std::move(v));
}

double PeriodicProfile::eval(double t) const {
    const int n = sample_count();
    double u = t / kTau * n;
    u -= std::floor(u / n) * n;
    int j = static_cast<int>(std::floor(u));
    if (j >= n) j -= n;
    const double frac = u - j;
    auto at = [&](int idx) { return v_[((idx % n) + n) % n]; };
    return catmull_rom(at(j - 1), at(j), at(j + 1), at(j + 2), frac);
}

PeriodicProfile primitive(const PeriodicProfile& gamma) {
    require(gamma.is_zero_mean(), Error::Code::Precondition,
            "primitive: profile has nonzero mean, not integrable periodically");
    return PeriodicProfile(periodic_antiderivative(gamma.samples()));
}

double mean_cos_zsin(double z, int quad_points) {
    double s = 0.0;
    for (int j = 0; j < quad_points; ++j) s += std::cos(z * std::sin(kTau * j / quad_points));
    return s / quad_points;
}

double mean_sin_zsin_sin(double z, int quad_points) {
    double s = 0.0;
    for (int j = 0; j < quad_points; ++j) {
        const double t = kTau * j / quad_points;
        s += std::sin(z * std::sin(t)) * std::sin(t);
    }
    return s / quad_points;
}

double solve_f(double s, double s_max) {
    require_pre(s >= 0.0 && s <= s_max, "solve_f: s outside [0, s_max]");
    if (s == 0.0) return 0.0;
    const double target = 1.0 / std::sqrt(1.0 + s * s);
    const double r_hi = kBesselJ0Zero1 * kBesselJ0Zero1;
    auto F = [&](double r) { return mean_cos_zsin(std::sqrt(r)) - target; };
    const double f_lo = F(0.0), f_hi = F(r_hi);
    require(f_lo > 0.0 && f_hi < 0.0, Error::Code::Numeric,
            "solve_f: root not bracketed below the first Bessel zero");
    double lo = 0.0, hi = r_hi;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) > 0.0 ? lo : hi) = mid;
    }
    const double r = 0.5 * (lo + hi);
    require(std::abs(F(r)) <= 1e-12, Error::Code::Numeric, "solve_f: residual too large");
    return r;
}

double default_s_max() {
    // The bracket F(s,0) > 0 > F(s, j01^2) holds for every s reachable in
    // practice, so the scan cap binds; halving keeps a comfortable margin.
    const double cap = 2.0;
    double last_good = 0.0;
    for (double s = 0.25; s <= cap + 1e-12; s += 0.25) {
        const double target = 1.0 / std::sqrt(1.0 + s * s);
        const double at_zero = 1.0 - target;
        const double at_hi = mean_cos_zsin(kBesselJ0Zero1) - target;
        if (!(at_zero > 0.0 && at_hi < 0.0)) break;
        last_good = s;
    }
    return 0.5 * last_good;
}

CorrugationProfile build_corrugation(double s_max, int s_samples, int t_samples) {
    require_pre(s_samples >= 64 && t_samples >= 64,
                "build_corrugation: need at least 64 samples per axis");
    require_pre(s_max > 0.0, "build_corrugation: s_max must be positive");

    CorrugationProfile p;
    p.s_max = s_max;
    p.s_samples = s_samples;
    p.t_samples = t_samples;
    const std::size_t total = static_cast<std::size_t>(s_samples) * t_samples;
    p.s_grid.resize(s_samples);
    p.f.resize(s_samples);
    p.f_prime.resize(s_samples);
    p.gamma1.resize(total);
    p.gamma2.resize(total);
    p.dt_gamma1.resize(total);
    p.dt_gamma2.resize(total);
    p.ds_gamma1.resize(total);
    p.ds_gamma2.resize(total);

    std::vector<double> row(t_samples), anti;
    for (int si = 0; si < s_samples; ++si) {
        const double s = s_max * si / (s_samples - 1);
        p.s_grid[si] = s;
        double r = 0.0;
        try {
            r = solve_f(s, s_max);
        } catch (const NumericError& e) {
            throw NumericError(std::string("build_corrugation: profile range exceeded: ") + e.what());
        }
        p.f[si] = r;
        const double sq = std::sqrt(r);
        const double root = std::sqrt(1.0 + s * s);

        // rho = f'(s) / (2 sqrt(f)) from implicit differentiation of F(s, f(s)) = 0;
        // the s -> 0 limit is sqrt(2).
        const double rho = (s == 0.0)
                               ? std::numbers::sqrt2
                               : s / (std::pow(1.0 + s * s, 1.5) * mean_sin_zsin_sin(sq));
        p.f_prime[si] = 2.0 * sq * rho;

        const std::size_t base = static_cast<std::size_t>(si) * t_samples;
        for (int tj = 0; tj < t_samples; ++tj) {
            const double t = kTau * tj / t_samples;
            p.dt_gamma1[base + tj] = root * std::cos(sq * std::sin(t)) - 1.0;
            p.dt_gamma2[base + tj] = root * std::sin(sq * std::sin(t));
        }

        for (int tj = 0; tj < t_samples; ++tj) row[tj] = p.dt_gamma1[base + tj];
        anchored_antiderivative(row, anti);
        std::copy(anti.begin(), anti.end(), p.gamma1.begin() + base);

        for (int tj = 0; tj < t_samples; ++tj) row[tj] = p.dt_gamma2[base + tj];
        anchored_antiderivative(row, anti);
        std::copy(anti.begin(), anti.end(), p.gamma2.begin() + base);

        const double droot = s / root;
        for (int tj = 0; tj < t_samples; ++tj) {
            const double t = kTau * tj / t_samples;
            const double st = std::sin(t);
            row[tj] = droot * std::cos(sq * st) - root * std::sin(sq * st) * st * rho;
        }
        anchored_antiderivative(row, anti);
        std::copy(anti.begin(), anti.end(), p.ds_gamma1.begin() + base);

        for (int tj = 0; tj < t_samples; ++tj) {
            const double t = kTau * tj / t_samples;
            const double st = std::sin(t);
            row[tj] = droot * std::sin(sq * st) + root * std::cos(sq * st) * st * rho;
        }
        anchored_antiderivative(row, anti);
        std::copy(anti.begin(), anti.end(), p.ds_gamma2.begin() + base);
    }
    return p;
}

namespace {

void eval_pair(const CorrugationProfile& p, const std::vector<double>& tab1,
               const std::vector<double>& tab2, double s, double t, double& o1, double& o2) {
    // clamped cubic in s composed with periodic cubic in t
    const double ds = p.s_max / (p.s_samples - 1);
    const double us = std::clamp(s / ds, 0.0, static_cast<double>(p.s_samples - 1));
    const int si = std::min(static_cast<int>(std::floor(us)), p.s_samples - 2);
    const double frac = us - si;
    auto clampi = [&](int i) { return std::clamp(i, 0, p.s_samples - 1); };
    double v1[4], v2[4];
    for (int k = -1; k <= 2; ++k) {
        const int r = clampi(si + k);
        v1[k + 1] = interp_row(tab1, p.t_samples, r * p.t_samples, t);
        v2[k + 1] = interp_row(tab2, p.t_samples, r * p.t_samples, t);
    }
    o1 = catmull_rom(v1[0], v1[1], v1[2], v1[3], frac);
    o2 = catmull_rom(v2[0], v2[1], v2[2], v2[3], frac);
}

}  // namespace

void CorrugationProfile::eval(double s, double t, double& g1, double& g2) const {
    eval_pair(*this, gamma1, gamma2, s, t, g1, g2);
}

void CorrugationProfile::eval_dt(double s, double t, double& d1, double& d2) const {
    eval_pair(*this, dt_gamma1, dt_gamma2, s, t, d1, d2);
}

void CorrugationProfile::eval_ds(double s, double t, double& d1, double& d2) const {
    eval_pair(*this, ds_gamma1, ds_gamma2, s, t, d1, d2);
}

void write_f_csv(const CorrugationProfile& p, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), Error::Code::Config, "write_f_csv: cannot open " + path);
    out << "s,f,f_prime\n";
    for (int si = 0; si < p.s_samples; ++si)
        out << p.s_grid[si] << ',' << p.f[si] << ',' << p.f_prime[si] << '\n';
}

void write_gamma_csv(const CorrugationProfile& p, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), Error::Code::Config, "write_gamma_csv: cannot open " + path);
    out << "s,t,gamma1,gamma2,dt_gamma1,dt_gamma2\n";
    for (int si = 0; si < p.s_samples; ++si)
        for (int tj = 0; tj < p.t_samples; ++tj) {
            const double t = kTau * tj / p.t_samples;
            out << p.s_grid[si] << ',' << t << ',' << p.table(p.gamma1, si, tj) << ','
                << p.table(p.gamma2, si, tj) << ',' << p.table(p.dt_gamma1, si, tj) << ','
                << p.table(p.dt_gamma2, si, tj) << '\n';
        }
}

}  // namespace cforge::profiles
