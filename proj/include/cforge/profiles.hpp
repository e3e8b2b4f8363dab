#pragma once

#include <string>
#include <vector>

#include "cforge/common.hpp"

namespace cforge::profiles {

/// Smooth 2*pi-periodic profile held as uniform samples with cubic
/// interpolation. Used for the oscillation shapes gamma and their primitives.
class PeriodicProfile {
public:
    PeriodicProfile() = default;
    explicit PeriodicProfile(std::vector<double> samples);

    static PeriodicProfile harmonic_sin(int samples = 4096);
    static PeriodicProfile harmonic_cos(int samples = 4096);

    int sample_count() const { return static_cast<int>(v_.size()); }
    const std::vector<double>& samples() const { return v_; }
    double mean() const { return mean_; }
    bool is_zero_mean(double tol = 1e-12) const { return std::abs(mean_) <= tol; }

    /// Periodic cubic (Catmull-Rom) evaluation at any t.
    double eval(double t) const;

private:
    std::vector<double> v_;
    double mean_ = 0.0;
};

/// Zero-mean antiderivative of a zero-mean profile; the derivative of the
/// output reproduces the input spectrally.
PeriodicProfile primitive(const PeriodicProfile& gamma);

/// Mean over a period of cos(z sin t), evaluated by periodic trapezoid
/// quadrature; equals the Bessel value J_0(z).
double mean_cos_zsin(double z, int quad_points = 512);

/// Mean over a period of sin(z sin t) sin t; equals J_1(z).
double mean_sin_zsin_sin(double z, int quad_points = 512);

/// First positive zero of J_0.
inline constexpr double kBesselJ0Zero1 = 2.404825557695772768;

/// Root r = f(s) of  mean_t cos(sqrt(r) sin t) = (1+s^2)^{-1/2}, bracketed in
/// [0, j_{0,1}^2]. Throws on s outside [0, s_max].
double solve_f(double s, double s_max);

/// Empirical admissible amplitude range: scans s upward until the bracketed
/// root would leave [0, j_{0,1}^2) or the scan cap is reached, then halves.
double default_s_max();

/// Tabulated Kuiper corrugation pair Gamma = (Gamma_1, Gamma_2) with
/// derivative tables and the implicit amplitude function f(s).
struct CorrugationProfile {
    double s_max = 0.0;
    int s_samples = 0;
    int t_samples = 0;
    std::vector<double> s_grid;
    std::vector<double> f;        // f(s_i)
    std::vector<double> f_prime;  // f'(s_i)
    // tables indexed [si * t_samples + tj]
    std::vector<double> gamma1, gamma2;
    std::vector<double> dt_gamma1, dt_gamma2;
    std::vector<double> ds_gamma1, ds_gamma2;

    double table(const std::vector<double>& tab, int si, int tj) const {
        return tab[static_cast<std::size_t>(si) * t_samples + tj];
    }

    /// Bicubic evaluation (periodic in t, clamped in s).
    void eval(double s, double t, double& g1, double& g2) const;
    void eval_dt(double s, double t, double& d1, double& d2) const;
    void eval_ds(double s, double t, double& d1, double& d2) const;
};

/// Builds the corrugation tables over [0, s_max] x [0, 2*pi].
CorrugationProfile build_corrugation(double s_max, int s_samples, int t_samples);

/// CSV dumps of (s, f(s)) and of the Gamma tables for plotting.
void write_f_csv(const CorrugationProfile& p, const std::string& path);
void write_gamma_csv(const CorrugationProfile& p, const std::string& path);

}  // namespace cforge::profiles
