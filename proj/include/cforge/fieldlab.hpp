#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cforge/common.hpp"
#include "cforge/symcore.hpp"

namespace cforge::fieldlab {

enum class DiffScheme { Spectral, Central4 };
enum class MatrixNorm { Operator, Frobenius };

/// Uniform periodic grid over the n-dimensional box [0, period)^n, realized
/// as a flat torus. points_per_axis is a power of two >= 8.
struct GridDomain {
    int n = 0;
    double period = 1.0;
    int points_per_axis = 0;

    GridDomain() = default;
    GridDomain(int n_, double period_, int points_);

    double spacing() const { return period / points_per_axis; }
    std::size_t point_count() const;
    bool operator==(const GridDomain& o) const {
        return n == o.n && period == o.period && points_per_axis == o.points_per_axis;
    }

    /// Coordinates of the flattened point index (row-major, last axis fastest).
    void unflatten(std::size_t idx, int* out) const;
    std::size_t flatten(const int* coords) const;
    double coord(int grid_index) const { return grid_index * spacing(); }
};

/// Largest frequency the grid tolerates: lambda * spacing <= pi/4.
double nyquist_limit(const GridDomain& dom);
void check_nyquist(double lambda, const GridDomain& dom, const std::string& what);

/// Snap a frequency to the nearest torus-commensurate value for direction xi
/// (a unit vector whose nonzero components are all equal, i.e. an axis e_i or
/// a normalized pair (e_i+e_j)/sqrt(2)). Returns the snapped frequency; the
/// plane wave sin(lambda x . xi) is then exactly periodic over the box.
double snap_frequency(double lambda, const Eigen::VectorXd& xi, const GridDomain& dom);

class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const GridDomain& dom, double fill = 0.0)
        : dom_(dom), v_(dom.point_count(), fill) {}

    const GridDomain& domain() const { return dom_; }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }
    std::size_t size() const { return v_.size(); }
    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

private:
    GridDomain dom_;
    std::vector<double> v_;
};

/// R^d-valued samples, point-major storage.
class VectorField {
public:
    VectorField() = default;
    VectorField(const GridDomain& dom, int d)
        : dom_(dom), d_(d), v_(dom.point_count() * d, 0.0) {}

    const GridDomain& domain() const { return dom_; }
    int d() const { return d_; }
    std::size_t points() const { return v_.size() / d_; }
    double* at(std::size_t p) { return v_.data() + p * d_; }
    const double* at(std::size_t p) const { return v_.data() + p * d_; }
    Eigen::Map<Eigen::VectorXd> vec(std::size_t p) { return {at(p), d_}; }
    Eigen::Map<const Eigen::VectorXd> vec(std::size_t p) const { return {at(p), d_}; }
    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

private:
    GridDomain dom_;
    int d_ = 0;
    std::vector<double> v_;
};

/// Symmetric n x n matrix samples stored packed (upper triangle, row-major),
/// so the representation is exactly symmetric by construction.
class MetricField {
public:
    MetricField() = default;
    explicit MetricField(const GridDomain& dom)
        : dom_(dom), nsym_(dom.n * (dom.n + 1) / 2), v_(dom.point_count() * nsym_, 0.0) {}

    const GridDomain& domain() const { return dom_; }
    int packed_size() const { return nsym_; }
    std::size_t points() const { return nsym_ ? v_.size() / nsym_ : 0; }
    double* at(std::size_t p) { return v_.data() + p * nsym_; }
    const double* at(std::size_t p) const { return v_.data() + p * nsym_; }

    Eigen::MatrixXd matrix(std::size_t p) const;
    void set_matrix(std::size_t p, const Eigen::MatrixXd& m);  // symmetrizes

    double entry(std::size_t p, int i, int j) const {
        return at(p)[symcore::PrimitiveBasis::packed_index(dom_.n, i, j)];
    }

    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

    /// Minimum eigenvalue over all grid points.
    double min_eigenvalue() const;

private:
    GridDomain dom_;
    int nsym_ = 0;
    std::vector<double> v_;
};

/// Map from the torus into R^d of the form u(x) = A x + v(x) with A a fixed
/// d x n matrix and v periodic. The affine part carries non-periodic behavior
/// (e.g. the inclusion x -> (x, 0)); every perturbation the scheme adds is
/// periodic.
class ImmersionField {
public:
    ImmersionField() = default;
    ImmersionField(const GridDomain& dom, int d)
        : dom_(dom), d_(d), affine_(Eigen::MatrixXd::Zero(d, dom.n)), periodic_(dom, d) {}

    static ImmersionField inclusion(const GridDomain& dom, double scale = 1.0);

    const GridDomain& domain() const { return dom_; }
    int d() const { return d_; }
    Eigen::MatrixXd& affine() { return affine_; }
    const Eigen::MatrixXd& affine() const { return affine_; }
    VectorField& periodic() { return periodic_; }
    const VectorField& periodic() const { return periodic_; }

    /// Value u(x_p) = A x_p + v(x_p) at grid point p.
    Eigen::VectorXd value(std::size_t p) const;

    bool has_gradient() const { return grad_.has_value(); }
    void refresh_gradient(DiffScheme scheme = DiffScheme::Spectral);
    void invalidate_gradient() { grad_.reset(); }

    /// d x n Jacobian at point p (requires refresh_gradient).
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>> jacobian(std::size_t p) const;
    const double* jacobian_raw(std::size_t p) const { return grad_->data().data() + p * d_ * dom_.n; }

private:
    GridDomain dom_;
    int d_ = 0;
    Eigen::MatrixXd affine_;
    VectorField periodic_;
    std::optional<VectorField> grad_;  // d*n components, column-major per point (d rows)
};

// ---------------------------------------------------------------------------
// Differentiation / integration
// ---------------------------------------------------------------------------

ScalarField differentiate(const ScalarField& f, int axis, DiffScheme scheme = DiffScheme::Spectral);
VectorField differentiate(const VectorField& f, int axis, DiffScheme scheme = DiffScheme::Spectral);
MetricField differentiate(const MetricField& f, int axis, DiffScheme scheme = DiffScheme::Spectral);

/// Spectral antiderivative along an axis for zero-mean (per line) fields.
ScalarField spectral_antiderivative(const ScalarField& f, int axis);

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

/// Convolution with the normalized compactly supported bump
/// exp(-1/(1-|x/ell|^2)) truncated at |x| = ell, realized as an exact
/// circular convolution on the torus. Requires ell < period/4.
ScalarField mollify(const ScalarField& f, double ell);
VectorField mollify(const VectorField& f, double ell);
MetricField mollify(const MetricField& f, double ell);
ImmersionField mollify(const ImmersionField& u, double ell);

/// Sum of the discrete kernel weights before normalization-correction checks.
double mollifier_mass(const GridDomain& dom, double ell);

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// First fundamental form (nabla u)^T (nabla u) per point.
MetricField pullback_metric(const ImmersionField& u);

/// g - pullback_metric(u), pointwise.
MetricField deficit(const MetricField& g, const ImmersionField& u);

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Pointwise magnitude conventions: scalar |.|, vector Euclidean norm,
/// matrix operator norm by default.
double sup_norm(const ScalarField& f);
double sup_norm(const VectorField& f);
double sup_norm(const MetricField& f, MatrixNorm norm = MatrixNorm::Operator);

/// [f]_k = sum_{|beta|=k} sup |∂^beta f| for k = 0, 1, 2.
double seminorm(const ScalarField& f, int order, DiffScheme scheme = DiffScheme::Spectral);
double seminorm(const VectorField& f, int order, DiffScheme scheme = DiffScheme::Spectral);
double seminorm(const MetricField& f, int order, DiffScheme scheme = DiffScheme::Spectral,
                MatrixNorm norm = MatrixNorm::Operator);

/// Hoelder seminorm estimate (a lower bound) by maximizing difference
/// quotients over axis-aligned pairs at dyadic separations spacing * 2^k.
double holder_seminorm(const ScalarField& f, double theta);
double holder_seminorm(const VectorField& f, double theta);

/// [f]_{1+theta} estimate: sum over axes of holder_seminorm(d_a f, theta).
double holder_seminorm_c1(const VectorField& f, double theta, DiffScheme scheme = DiffScheme::Spectral);

// ---------------------------------------------------------------------------
// Elementwise helpers
// ---------------------------------------------------------------------------

ScalarField synth_plane_wave(const GridDomain& dom, double lambda, const Eigen::VectorXd& xi,
                             bool cosine = false);

// ---------------------------------------------------------------------------
// Snapshots ("CFORGE1" format)
// ---------------------------------------------------------------------------
// Header: magic "CFORGE1\0", then little-endian u64 {n, d, points_per_axis}
// and f64 period, followed by row-major little-endian f64 samples
// (point-major, component-minor). Immersion snapshots carry the d x n affine
// block (row-major) between the header and the periodic samples.

void save_snapshot(const std::string& path, const ScalarField& f);
void save_snapshot(const std::string& path, const MetricField& f);
void save_snapshot(const std::string& path, const ImmersionField& u);

ScalarField load_scalar_snapshot(const std::string& path);
MetricField load_metric_snapshot(const std::string& path);
ImmersionField load_immersion_snapshot(const std::string& path);

}  // namespace cforge::fieldlab
