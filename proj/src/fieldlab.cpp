#include "cforge/fieldlab.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

namespace cforge::fieldlab {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// FFT plan caches (single-threaded use; FFTW_ESTIMATE keeps plans and results
// deterministic across runs)
// ---------------------------------------------------------------------------

class LineFft {
public:
    explicit LineFft(int n) : n_(n) {
        real_ = fftw_alloc_real(n);
        cplx_ = fftw_alloc_complex(n / 2 + 1);
        fwd_ = fftw_plan_dft_r2c_1d(n, real_, cplx_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_1d(n, cplx_, real_, FFTW_ESTIMATE);
    }
    ~LineFft() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(real_);
        fftw_free(cplx_);
    }
    LineFft(const LineFft&) = delete;
    LineFft& operator=(const LineFft&) = delete;

    static LineFft& get(int n) {
        static std::map<int, std::unique_ptr<LineFft>> cache;
        auto& slot = cache[n];
        if (!slot) slot = std::make_unique<LineFft>(n);
        return *slot;
    }

    int n_;
    double* real_;
    fftw_complex* cplx_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

class GridFft {
public:
    GridFft(int rank, int n) : rank_(rank), n_(n) {
        std::vector<int> dims(rank, n);
        real_count_ = 1;
        for (int i = 0; i < rank; ++i) real_count_ *= static_cast<std::size_t>(n);
        cplx_count_ = real_count_ / n * (n / 2 + 1);
        real_ = fftw_alloc_real(real_count_);
        cplx_ = fftw_alloc_complex(cplx_count_);
        fwd_ = fftw_plan_dft_r2c(rank, dims.data(), real_, cplx_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r(rank, dims.data(), cplx_, real_, FFTW_ESTIMATE);
    }
    ~GridFft() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(real_);
        fftw_free(cplx_);
    }
    GridFft(const GridFft&) = delete;
    GridFft& operator=(const GridFft&) = delete;

    static GridFft& get(const GridDomain& dom) {
        static std::map<std::pair<int, int>, std::unique_ptr<GridFft>> cache;
        auto& slot = cache[{dom.n, dom.points_per_axis}];
        if (!slot) slot = std::make_unique<GridFft>(dom.n, dom.points_per_axis);
        return *slot;
    }

    int rank_;
    int n_;
    std::size_t real_count_;
    std::size_t cplx_count_;
    double* real_;
    fftw_complex* cplx_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

std::size_t axis_stride(const GridDomain& dom, int axis) {
    std::size_t s = 1;
    for (int a = dom.n - 1; a > axis; --a) s *= static_cast<std::size_t>(dom.points_per_axis);
    return s;
}

/// Calls fn(base_flat_index) for every grid line along `axis` (points with
/// coordinate 0 on that axis).
template <typename F>
void for_each_line(const GridDomain& dom, int axis, F&& fn) {
    const int N = dom.points_per_axis;
    std::vector<int> coords(dom.n, 0);
    coords[axis] = 0;
    while (true) {
        fn(dom.flatten(coords.data()));
        int a = dom.n - 1;
        for (; a >= 0; --a) {
            if (a == axis) continue;
            if (++coords[a] < N) break;
            coords[a] = 0;
        }
        if (a < 0) break;
    }
}

enum class LineOp { Derivative, Antiderivative };

/// Applies a per-line spectral operation along `axis` to interleaved data
/// with `ncomp` components per point.
void spectral_line_op(std::vector<double>& values, int ncomp, const GridDomain& dom, int axis,
                      LineOp op) {
    const int N = dom.points_per_axis;
    LineFft& fft = LineFft::get(N);
    const std::size_t stride = axis_stride(dom, axis);
    const double w0 = 2.0 * kPi / dom.period;
    const double inv_n = 1.0 / N;

    for_each_line(dom, axis, [&](std::size_t base) {
        for (int c = 0; c < ncomp; ++c) {
            for (int t = 0; t < N; ++t)
                fft.real_[t] = values[(base + t * stride) * ncomp + c];
            fftw_execute(fft.fwd_);
            if (op == LineOp::Derivative) {
                for (int k = 0; k <= N / 2; ++k) {
                    const double w = w0 * k;
                    const double re = fft.cplx_[k][0];
                    const double im = fft.cplx_[k][1];
                    if (k == N / 2) {
                        fft.cplx_[k][0] = 0.0;
                        fft.cplx_[k][1] = 0.0;
                    } else {
                        fft.cplx_[k][0] = -w * im;
                        fft.cplx_[k][1] = w * re;
                    }
                }
            } else {
                fft.cplx_[0][0] = 0.0;
                fft.cplx_[0][1] = 0.0;
                for (int k = 1; k <= N / 2; ++k) {
                    const double w = w0 * k;
                    const double re = fft.cplx_[k][0];
                    const double im = fft.cplx_[k][1];
                    if (k == N / 2) {
                        fft.cplx_[k][0] = 0.0;
                        fft.cplx_[k][1] = 0.0;
                    } else {
                        fft.cplx_[k][0] = im / w;
                        fft.cplx_[k][1] = -re / w;
                    }
                }
            }
            fftw_execute(fft.bwd_);
            for (int t = 0; t < N; ++t)
                values[(base + t * stride) * ncomp + c] = fft.real_[t] * inv_n;
        }
    });
}

void central4_line_derivative(std::vector<double>& values, int ncomp, const GridDomain& dom,
                              int axis) {
    const int N = dom.points_per_axis;
    const std::size_t stride = axis_stride(dom, axis);
    const double inv12h = 1.0 / (12.0 * dom.spacing());
    std::vector<double> line(N);
    for_each_line(dom, axis, [&](std::size_t base) {
        for (int c = 0; c < ncomp; ++c) {
            for (int t = 0; t < N; ++t) line[t] = values[(base + t * stride) * ncomp + c];
            for (int t = 0; t < N; ++t) {
                const double fm2 = line[(t - 2 + N) % N];
                const double fm1 = line[(t - 1 + N) % N];
                const double fp1 = line[(t + 1) % N];
                const double fp2 = line[(t + 2) % N];
                values[(base + t * stride) * ncomp + c] = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) * inv12h;
            }
        }
    });
}

void derivative_in_place(std::vector<double>& values, int ncomp, const GridDomain& dom, int axis,
                         DiffScheme scheme) {
    if (scheme == DiffScheme::Spectral)
        spectral_line_op(values, ncomp, dom, axis, LineOp::Derivative);
    else
        central4_line_derivative(values, ncomp, dom, axis);
}

// ---------------------------------------------------------------------------
// Mollifier kernel
// ---------------------------------------------------------------------------

struct KernelKey {
    int n;
    int N;
    double period;
    double ell;
    bool operator<(const KernelKey& o) const {
        return std::tie(n, N, period, ell) < std::tie(o.n, o.N, o.period, o.ell);
    }
};

/// Discrete bump kernel on the wrapped grid, unit mass.
std::vector<double> build_kernel_grid(const GridDomain& dom, double ell) {
    const int N = dom.points_per_axis;
    const double h = dom.spacing();
    const int K = static_cast<int>(std::floor(ell / h));
    std::vector<double> kernel(dom.point_count(), 0.0);

    std::vector<int> off(dom.n, -K);
    double mass = 0.0;
    std::vector<int> coords(dom.n);
    while (true) {
        double r2 = 0.0;
        for (int a = 0; a < dom.n; ++a) {
            const double x = off[a] * h / ell;
            r2 += x * x;
        }
        if (r2 < 1.0) {
            const double w = std::exp(-1.0 / (1.0 - r2));
            for (int a = 0; a < dom.n; ++a) coords[a] = ((off[a] % N) + N) % N;
            kernel[dom.flatten(coords.data())] += w;
            mass += w;
        }
        int a = dom.n - 1;
        for (; a >= 0; --a) {
            if (++off[a] <= K) break;
            off[a] = -K;
        }
        if (a < 0) break;
    }
    for (double& w : kernel) w /= mass;
    return kernel;
}

const std::vector<std::complex<double>>& kernel_transform(const GridDomain& dom, double ell) {
    static std::map<KernelKey, std::vector<std::complex<double>>> cache;
    const KernelKey key{dom.n, dom.points_per_axis, dom.period, ell};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    if (cache.size() > 6) cache.clear();

    GridFft& fft = GridFft::get(dom);
    const std::vector<double> kernel = build_kernel_grid(dom, ell);
    std::memcpy(fft.real_, kernel.data(), kernel.size() * sizeof(double));
    fftw_execute(fft.fwd_);
    std::vector<std::complex<double>> out(fft.cplx_count_);
    for (std::size_t i = 0; i < fft.cplx_count_; ++i)
        out[i] = {fft.cplx_[i][0], fft.cplx_[i][1]};
    return cache.emplace(key, std::move(out)).first->second;
}

void mollify_component(std::vector<double>& values, int ncomp, int comp, const GridDomain& dom,
                       const std::vector<std::complex<double>>& khat) {
    GridFft& fft = GridFft::get(dom);
    const std::size_t npts = dom.point_count();
    for (std::size_t p = 0; p < npts; ++p) fft.real_[p] = values[p * ncomp + comp];
    fftw_execute(fft.fwd_);
    for (std::size_t i = 0; i < fft.cplx_count_; ++i) {
        const std::complex<double> v{fft.cplx_[i][0], fft.cplx_[i][1]};
        const std::complex<double> r = v * khat[i];
        fft.cplx_[i][0] = r.real();
        fft.cplx_[i][1] = r.imag();
    }
    fftw_execute(fft.bwd_);
    const double scale = 1.0 / static_cast<double>(npts);
    for (std::size_t p = 0; p < npts; ++p) values[p * ncomp + comp] = fft.real_[p] * scale;
}

void mollify_in_place(std::vector<double>& values, int ncomp, const GridDomain& dom, double ell) {
    require(ell < dom.period / 4.0, Error::Code::Precondition,
            "mollify: kernel radius overlaps itself on the torus (ell >= period/4)");
    require_pre(ell > 0.0, "mollify: ell must be positive");
    const auto& khat = kernel_transform(dom, ell);
    for (int c = 0; c < ncomp; ++c) mollify_component(values, ncomp, c, dom, khat);
}

double matrix_point_norm(const Eigen::MatrixXd& m, MatrixNorm norm) {
    if (norm == MatrixNorm::Frobenius) return m.norm();
    if (m.rows() == 3) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
        es.computeDirect(Eigen::Matrix3d(m), Eigen::EigenvaluesOnly);
        return std::max(std::abs(es.eigenvalues().minCoeff()), std::abs(es.eigenvalues().maxCoeff()));
    }
    if (m.rows() == 2) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es;
        es.computeDirect(Eigen::Matrix2d(m), Eigen::EigenvaluesOnly);
        return std::max(std::abs(es.eigenvalues().minCoeff()), std::abs(es.eigenvalues().maxCoeff()));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return std::max(std::abs(es.eigenvalues().minCoeff()), std::abs(es.eigenvalues().maxCoeff()));
}

// ---------------------------------------------------------------------------
// Snapshot primitives
// ---------------------------------------------------------------------------

constexpr char kMagic[8] = {'C', 'F', 'O', 'R', 'G', 'E', '1', '\0'};

void write_header(std::ofstream& out, const GridDomain& dom, std::uint64_t d) {
    out.write(kMagic, 8);
    const std::uint64_t n = static_cast<std::uint64_t>(dom.n);
    const std::uint64_t ppa = static_cast<std::uint64_t>(dom.points_per_axis);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&d), 8);
    out.write(reinterpret_cast<const char*>(&ppa), 8);
    out.write(reinterpret_cast<const char*>(&dom.period), 8);
}

struct SnapshotHeader {
    GridDomain dom;
    std::uint64_t d;
};

SnapshotHeader read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, kMagic, 8) == 0, Error::Code::Config,
            "snapshot: bad magic in " + path);
    std::uint64_t n = 0, d = 0, ppa = 0;
    double period = 0.0;
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&d), 8);
    in.read(reinterpret_cast<char*>(&ppa), 8);
    in.read(reinterpret_cast<char*>(&period), 8);
    require(in.good(), Error::Code::Config, "snapshot: truncated header in " + path);
    SnapshotHeader h;
    h.dom = GridDomain(static_cast<int>(n), period, static_cast<int>(ppa));
    h.d = d;
    return h;
}

void write_doubles(std::ofstream& out, const double* p, std::size_t count) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t count, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    require(in.good(), Error::Code::Config, "snapshot: truncated data in " + path);
}

}  // namespace

// ---------------------------------------------------------------------------
// GridDomain
// ---------------------------------------------------------------------------

GridDomain::GridDomain(int n_, double period_, int points_) : n(n_), period(period_), points_per_axis(points_) {
    require_pre(n >= 1, "GridDomain: dimension must be positive");
    require_pre(period > 0.0, "GridDomain: period must be positive");
    require_pre(points_per_axis >= 8, "GridDomain: need at least 8 points per axis");
    require_pre((points_per_axis & (points_per_axis - 1)) == 0,
                "GridDomain: points_per_axis must be a power of two");
}

std::size_t GridDomain::point_count() const {
    std::size_t c = 1;
    for (int i = 0; i < n; ++i) c *= static_cast<std::size_t>(points_per_axis);
    return c;
}

void GridDomain::unflatten(std::size_t idx, int* out) const {
    for (int a = n - 1; a >= 0; --a) {
        out[a] = static_cast<int>(idx % points_per_axis);
        idx /= points_per_axis;
    }
}

std::size_t GridDomain::flatten(const int* coords) const {
    std::size_t idx = 0;
    for (int a = 0; a < n; ++a) idx = idx * points_per_axis + static_cast<std::size_t>(coords[a]);
    return idx;
}

double nyquist_limit(const GridDomain& dom) { return kPi / (4.0 * dom.spacing()); }

void check_nyquist(double lambda, const GridDomain& dom, const std::string& what) {
    if (lambda * dom.spacing() > kPi / 4.0 + 1e-12)
        throw PreconditionError(what + ": frequency " + std::to_string(lambda) +
                                " exceeds the grid guard " + std::to_string(nyquist_limit(dom)));
}

double snap_frequency(double lambda, const Eigen::VectorXd& xi, const GridDomain& dom) {
    double comp = 0.0;
    for (int i = 0; i < xi.size(); ++i)
        if (xi(i) != 0.0) {
            require_pre(comp == 0.0 || std::abs(std::abs(xi(i)) - comp) < 1e-12,
                        "snap_frequency: direction components must share a magnitude");
            comp = std::abs(xi(i));
        }
    require_pre(comp > 0.0, "snap_frequency: zero direction");
    const double unit = 2.0 * kPi / (dom.period * comp);
    const long long k = std::max(1LL, std::llround(lambda / unit));
    return unit * static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// MetricField
// ---------------------------------------------------------------------------

Eigen::MatrixXd MetricField::matrix(std::size_t p) const {
    const int n = dom_.n;
    Eigen::MatrixXd m(n, n);
    const double* v = at(p);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            m(i, j) = v[k];
            m(j, i) = v[k];
            ++k;
        }
    return m;
}

void MetricField::set_matrix(std::size_t p, const Eigen::MatrixXd& m) {
    const int n = dom_.n;
    double* v = at(p);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) v[k++] = 0.5 * (m(i, j) + m(j, i));
}

double MetricField::min_eigenvalue() const {
    double mn = std::numeric_limits<double>::infinity();
    const std::size_t np = points();
    for (std::size_t p = 0; p < np; ++p) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix(p), Eigen::EigenvaluesOnly);
        mn = std::min(mn, es.eigenvalues().minCoeff());
    }
    return mn;
}

// ---------------------------------------------------------------------------
// ImmersionField
// ---------------------------------------------------------------------------

ImmersionField ImmersionField::inclusion(const GridDomain& dom, double scale) {
    ImmersionField u(dom, 2 * dom.n);
    u.affine_.topLeftCorner(dom.n, dom.n) = scale * Eigen::MatrixXd::Identity(dom.n, dom.n);
    return u;
}

Eigen::VectorXd ImmersionField::value(std::size_t p) const {
    std::vector<int> coords(dom_.n);
    dom_.unflatten(p, coords.data());
    Eigen::VectorXd x(dom_.n);
    for (int a = 0; a < dom_.n; ++a) x(a) = dom_.coord(coords[a]);
    return affine_ * x + periodic_.vec(p);
}

void ImmersionField::refresh_gradient(DiffScheme scheme) {
    VectorField g(dom_, d_ * dom_.n);
    for (int axis = 0; axis < dom_.n; ++axis) {
        std::vector<double> deriv = periodic_.data();
        derivative_in_place(deriv, d_, dom_, axis, scheme);
        const std::size_t np = dom_.point_count();
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = g.at(p) + axis * d_;
            const double* src = deriv.data() + p * d_;
            for (int r = 0; r < d_; ++r) dst[r] = affine_(r, axis) + src[r];
        }
    }
    grad_ = std::move(g);
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>> ImmersionField::jacobian(
    std::size_t p) const {
    require_pre(grad_.has_value(), "ImmersionField: gradient cache not populated");
    return {grad_->data().data() + p * d_ * dom_.n, d_, dom_.n};
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

ScalarField differentiate(const ScalarField& f, int axis, DiffScheme scheme) {
    ScalarField out = f;
    derivative_in_place(out.data(), 1, f.domain(), axis, scheme);
    return out;
}

VectorField differentiate(const VectorField& f, int axis, DiffScheme scheme) {
    VectorField out = f;
    derivative_in_place(out.data(), f.d(), f.domain(), axis, scheme);
    return out;
}

MetricField differentiate(const MetricField& f, int axis, DiffScheme scheme) {
    MetricField out = f;
    derivative_in_place(out.data(), f.packed_size(), f.domain(), axis, scheme);
    return out;
}

ScalarField spectral_antiderivative(const ScalarField& f, int axis) {
    ScalarField out = f;
    spectral_line_op(out.data(), 1, f.domain(), axis, LineOp::Antiderivative);
    return out;
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

ScalarField mollify(const ScalarField& f, double ell) {
    ScalarField out = f;
    mollify_in_place(out.data(), 1, f.domain(), ell);
    return out;
}

VectorField mollify(const VectorField& f, double ell) {
    VectorField out = f;
    mollify_in_place(out.data(), f.d(), f.domain(), ell);
    return out;
}

MetricField mollify(const MetricField& f, double ell) {
    MetricField out = f;
    mollify_in_place(out.data(), f.packed_size(), f.domain(), ell);
    return out;
}

ImmersionField mollify(const ImmersionField& u, double ell) {
    // The kernel is symmetric with unit mass, so the affine part is fixed by
    // the convolution; only the periodic part moves.
    ImmersionField out(u.domain(), u.d());
    out.affine() = u.affine();
    out.periodic() = mollify(u.periodic(), ell);
    return out;
}

double mollifier_mass(const GridDomain& dom, double ell) {
    const auto kernel = build_kernel_grid(dom, ell);
    double s = 0.0;
    for (double w : kernel) s += w;
    return s;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

MetricField pullback_metric(const ImmersionField& u) {
    require_pre(u.has_gradient(), "pullback_metric: gradient cache not populated");
    const GridDomain& dom = u.domain();
    MetricField g(dom);
    const int n = dom.n;
    const int d = u.d();
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        const double* J = u.jacobian_raw(p);  // column-major d x n
        double* out = g.at(p);
        int k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double s = 0.0;
                const double* ci = J + i * d;
                const double* cj = J + j * d;
                for (int r = 0; r < d; ++r) s += ci[r] * cj[r];
                out[k++] = s;
            }
    }
    return g;
}

MetricField deficit(const MetricField& g, const ImmersionField& u) {
    require_pre(g.domain() == u.domain(), "deficit: domain mismatch");
    MetricField pb = pullback_metric(u);
    MetricField out = g;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= pb.data()[i];
    return out;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

double sup_norm(const ScalarField& f) {
    double m = 0.0;
    for (double v : f.data()) m = std::max(m, std::abs(v));
    return m;
}

double sup_norm(const VectorField& f) {
    double m = 0.0;
    const std::size_t np = f.points();
    for (std::size_t p = 0; p < np; ++p) m = std::max(m, f.vec(p).norm());
    return m;
}

double sup_norm(const MetricField& f, MatrixNorm norm) {
    double m = 0.0;
    const std::size_t np = f.points();
    for (std::size_t p = 0; p < np; ++p) m = std::max(m, matrix_point_norm(f.matrix(p), norm));
    return m;
}

namespace {

template <typename Field, typename SupFn>
double seminorm_impl(const Field& f, int order, DiffScheme scheme, SupFn&& sup) {
    require_pre(order >= 0 && order <= 2, "seminorm: order must be 0, 1 or 2");
    if (order == 0) return sup(f);
    const int n = f.domain().n;
    double total = 0.0;
    if (order == 1) {
        for (int a = 0; a < n; ++a) total += sup(differentiate(f, a, scheme));
    } else {
        for (int a = 0; a < n; ++a) {
            Field da = differentiate(f, a, scheme);
            for (int b = a; b < n; ++b) total += sup(differentiate(da, b, scheme));
        }
    }
    return total;
}

}  // namespace

double seminorm(const ScalarField& f, int order, DiffScheme scheme) {
    return seminorm_impl(f, order, scheme, [](const ScalarField& g) { return sup_norm(g); });
}

double seminorm(const VectorField& f, int order, DiffScheme scheme) {
    return seminorm_impl(f, order, scheme, [](const VectorField& g) { return sup_norm(g); });
}

double seminorm(const MetricField& f, int order, DiffScheme scheme, MatrixNorm norm) {
    return seminorm_impl(f, order, scheme,
                         [norm](const MetricField& g) { return sup_norm(g, norm); });
}

namespace {

template <typename DiffAt>
double holder_impl(const GridDomain& dom, double theta, DiffAt&& diff_at) {
    require_pre(theta > 0.0 && theta < 1.0, "holder_seminorm: theta must lie in (0,1)");
    const int N = dom.points_per_axis;
    const double h = dom.spacing();
    double best = 0.0;
    std::vector<int> coords(dom.n);
    for (int axis = 0; axis < dom.n; ++axis) {
        const std::size_t stride = axis_stride(dom, axis);
        for (int k = 0; (1 << k) <= N / 2; ++k) {
            const int shift = 1 << k;
            const double sep = h * shift;
            const double scale = 1.0 / std::pow(sep, theta);
            const std::size_t np = dom.point_count();
            for (std::size_t p = 0; p < np; ++p) {
                dom.unflatten(p, coords.data());
                const int t = coords[axis];
                const std::ptrdiff_t delta =
                    (static_cast<std::ptrdiff_t>((t + shift) % N) - t) * static_cast<std::ptrdiff_t>(stride);
                const std::size_t q = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(p) + delta);
                best = std::max(best, diff_at(p, q) * scale);
            }
        }
    }
    return best;
}

}  // namespace

double holder_seminorm(const ScalarField& f, double theta) {
    return holder_impl(f.domain(), theta, [&](std::size_t p, std::size_t q) {
        return std::abs(f[p] - f[q]);
    });
}

double holder_seminorm(const VectorField& f, double theta) {
    return holder_impl(f.domain(), theta, [&](std::size_t p, std::size_t q) {
        return (f.vec(p) - f.vec(q)).norm();
    });
}

double holder_seminorm_c1(const VectorField& f, double theta, DiffScheme scheme) {
    double total = 0.0;
    for (int a = 0; a < f.domain().n; ++a) total += holder_seminorm(differentiate(f, a, scheme), theta);
    return total;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

ScalarField synth_plane_wave(const GridDomain& dom, double lambda, const Eigen::VectorXd& xi,
                             bool cosine) {
    require_pre(xi.size() == dom.n, "synth_plane_wave: direction dimension mismatch");
    ScalarField f(dom);
    std::vector<int> coords(dom.n);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        dom.unflatten(p, coords.data());
        double phase = 0.0;
        for (int a = 0; a < dom.n; ++a) phase += xi(a) * dom.coord(coords[a]);
        phase *= lambda;
        f[p] = cosine ? std::cos(phase) : std::sin(phase);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

void save_snapshot(const std::string& path, const ScalarField& f) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), Error::Code::Config, "snapshot: cannot open " + path);
    write_header(out, f.domain(), 1);
    write_doubles(out, f.data().data(), f.data().size());
    require(out.good(), Error::Code::Config, "snapshot: write failure on " + path);
}

void save_snapshot(const std::string& path, const MetricField& f) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), Error::Code::Config, "snapshot: cannot open " + path);
    write_header(out, f.domain(), static_cast<std::uint64_t>(f.packed_size()));
    write_doubles(out, f.data().data(), f.data().size());
    require(out.good(), Error::Code::Config, "snapshot: write failure on " + path);
}

void save_snapshot(const std::string& path, const ImmersionField& u) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), Error::Code::Config, "snapshot: cannot open " + path);
    write_header(out, u.domain(), static_cast<std::uint64_t>(u.d()));
    // Affine block (row-major d x n) precedes the periodic samples.
    for (int r = 0; r < u.d(); ++r)
        for (int c = 0; c < u.domain().n; ++c) {
            const double v = u.affine()(r, c);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    write_doubles(out, u.periodic().data().data(), u.periodic().data().size());
    require(out.good(), Error::Code::Config, "snapshot: write failure on " + path);
}

ScalarField load_scalar_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Code::Config, "snapshot: cannot open " + path);
    const SnapshotHeader h = read_header(in, path);
    require(h.d == 1, Error::Code::Config, "snapshot: not a scalar field: " + path);
    ScalarField f(h.dom);
    read_doubles(in, f.data().data(), f.data().size(), path);
    return f;
}

MetricField load_metric_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Code::Config, "snapshot: cannot open " + path);
    const SnapshotHeader h = read_header(in, path);
    MetricField f(h.dom);
    require(h.d == static_cast<std::uint64_t>(f.packed_size()), Error::Code::Config,
            "snapshot: not a metric field: " + path);
    read_doubles(in, f.data().data(), f.data().size(), path);
    return f;
}

ImmersionField load_immersion_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Code::Config, "snapshot: cannot open " + path);
    const SnapshotHeader h = read_header(in, path);
    ImmersionField u(h.dom, static_cast<int>(h.d));
    for (int r = 0; r < u.d(); ++r)
        for (int c = 0; c < h.dom.n; ++c) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), 8);
            u.affine()(r, c) = v;
        }
    require(in.good(), Error::Code::Config, "snapshot: truncated affine block in " + path);
    read_doubles(in, u.periodic().data().data(), u.periodic().data().size(), path);
    return u;
}

}  // namespace cforge::fieldlab
