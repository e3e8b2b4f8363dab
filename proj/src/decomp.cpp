#include "cforge/decomp.hpp"

#include <cmath>
#include <numbers>

namespace cforge::decomp {

using fieldlab::DiffScheme;
using fieldlab::GridDomain;
using fieldlab::MetricField;
using fieldlab::ScalarField;
using fieldlab::VectorField;
using profiles::PeriodicProfile;
using symcore::PrimitiveBasis;

namespace {

/// Matrix taking packed symmetric entries to basis coefficients: c = P h_packed.
Eigen::MatrixXd projection_matrix(const PrimitiveBasis& basis) {
    const int n = basis.n;
    const int nsym = n * (n + 1) / 2;
    Eigen::MatrixXd W(basis.n_star, nsym);
    for (int i = 0; i < basis.n_star; ++i) {
        int k = 0;
        for (int r = 0; r < n; ++r)
            for (int c = r; c < n; ++c) W(i, k++) = basis.basis_mats[i](r, c) * (r == c ? 1.0 : 2.0);
    }
    return basis.gram_lu.solve(W);
}

/// Packed representation of each basis matrix.
std::vector<Eigen::VectorXd> packed_basis(const PrimitiveBasis& basis) {
    const int n = basis.n;
    std::vector<Eigen::VectorXd> out(basis.n_star);
    for (int i = 0; i < basis.n_star; ++i) {
        Eigen::VectorXd v(n * (n + 1) / 2);
        int k = 0;
        for (int r = 0; r < n; ++r)
            for (int c = r; c < n; ++c) v(k++) = basis.basis_mats[i](r, c);
        out[i] = v;
    }
    return out;
}

/// Gradient fields of a scalar field, one per axis.
std::vector<ScalarField> gradient_fields(const ScalarField& a) {
    std::vector<ScalarField> g;
    g.reserve(a.domain().n);
    for (int axis = 0; axis < a.domain().n; ++axis) g.push_back(differentiate(a, axis));
    return g;
}

/// Accumulates sum_i mu_i^{-2} grad a_i (x) grad a_i into a metric field.
MetricField gradient_correction(const std::vector<ScalarField>& amps,
                                const std::vector<double>& mu, int n) {
    const GridDomain& dom = amps[0].domain();
    MetricField D(dom);
    for (int i = 0; i < n; ++i) {
        const double w = 1.0 / (mu[i + 1] * mu[i + 1]);
        const std::vector<ScalarField> g = gradient_fields(amps[i]);
        const std::size_t np = dom.point_count();
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = D.at(p);
            int k = 0;
            for (int r = 0; r < dom.n; ++r)
                for (int c = r; c < dom.n; ++c) dst[k++] += w * g[r][p] * g[c][p];
        }
    }
    return D;
}

void check_h_norm_hypothesis(const MetricField& h, double mu0, std::vector<std::string>& warnings) {
    const double h1 = fieldlab::seminorm(h, 1);
    if (h1 > mu0 * 1.0000001)
        warnings.push_back("[h]_1 = " + std::to_string(h1) + " exceeds mu_0 = " + std::to_string(mu0));
    const double h2 = fieldlab::seminorm(h, 2);
    if (h2 > mu0 * mu0 * 1.0000001)
        warnings.push_back("[h]_2 = " + std::to_string(h2) + " exceeds mu_0^2");
}

}  // namespace

std::vector<ScalarField> project_L_field(const PrimitiveBasis& basis, const MetricField& h) {
    const Eigen::MatrixXd P = projection_matrix(basis);
    const GridDomain& dom = h.domain();
    std::vector<ScalarField> out(basis.n_star, ScalarField(dom));
    const int nsym = h.packed_size();
    const std::size_t np = dom.point_count();
    Eigen::VectorXd packed(nsym), c(basis.n_star);
    for (std::size_t p = 0; p < np; ++p) {
        const double* src = h.at(p);
        for (int k = 0; k < nsym; ++k) packed(k) = src[k];
        c.noalias() = P * packed;
        for (int i = 0; i < basis.n_star; ++i) out[i][p] = c(i);
    }
    return out;
}

MetricField sym_gradient(const VectorField& w, DiffScheme scheme) {
    const GridDomain& dom = w.domain();
    require_pre(w.d() == dom.n, "sym_gradient: field must be R^n-valued");
    MetricField out(dom);
    for (int axis = 0; axis < dom.n; ++axis) {
        const VectorField dw = differentiate(w, axis, scheme);
        const std::size_t np = dom.point_count();
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = out.at(p);
            const double* dwp = dw.at(p);
            // contribute sym(e_axis (x) dw): entry (r,c) gains
            // (dw_c [r==axis] + dw_r [c==axis]) / 2
            int k = 0;
            for (int r = 0; r < dom.n; ++r)
                for (int c = r; c < dom.n; ++c) {
                    double v = 0.0;
                    if (r == axis) v += 0.5 * dwp[c];
                    if (c == axis) v += 0.5 * dwp[r];
                    dst[k++] += v;
                }
        }
    }
    return out;
}

ScalarField profile_on_phase(const PeriodicProfile& gamma, const GridDomain& dom, double lambda,
                             const Eigen::VectorXd& xi) {
    ScalarField f(dom);
    std::vector<int> coords(dom.n);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        dom.unflatten(p, coords.data());
        double phase = 0.0;
        for (int a = 0; a < dom.n; ++a) phase += xi(a) * dom.coord(coords[a]);
        f[p] = gamma.eval(lambda * phase);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Kallen decomposition
// ---------------------------------------------------------------------------

KallenDecomposition kallen_decompose(const PrimitiveBasis& basis, const MetricField& h,
                                     const std::vector<double>& mu, int depth,
                                     double hypothesis_tol_factor) {
    const GridDomain& dom = h.domain();
    require_pre(dom.n == basis.n, "kallen_decompose: dimension mismatch");
    require_pre(static_cast<int>(mu.size()) == basis.n + 1,
                "kallen_decompose: need frequencies mu_0..mu_n");
    require_pre(depth >= 0, "kallen_decompose: depth must be nonnegative");
    require_pre(mu[0] >= 1.0, "kallen_decompose: mu_0 must be >= 1");
    for (std::size_t i = 1; i < mu.size(); ++i)
        require_pre(mu[i] >= mu[i - 1], "kallen_decompose: frequencies must be nondecreasing");

    KallenDecomposition kd;
    kd.depth = depth;
    kd.mu = mu;

    // smallness hypothesis
    MetricField dev = h;
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        double* v = dev.at(p);
        int k = 0;
        for (int r = 0; r < dom.n; ++r)
            for (int c = r; c < dom.n; ++c) v[k++] -= basis.h_star(r, c);
    }
    kd.hypothesis_value = fieldlab::sup_norm(dev) + mu[0] / mu[1];
    kd.hypothesis_strict = kd.hypothesis_value <= 2.0 * basis.sigma_0;
    require(kd.hypothesis_value <= 2.0 * basis.sigma_0 * hypothesis_tol_factor,
            Error::Code::Precondition,
            "kallen_decompose: deficit too large, ||h - h_*||_0 + mu_0/mu_1 = " +
                std::to_string(kd.hypothesis_value) + " > " +
                std::to_string(2.0 * basis.sigma_0 * hypothesis_tol_factor));
    if (!kd.hypothesis_strict)
        kd.warnings.push_back("hypothesis exceeds 2 sigma_0; accepted within tolerance factor");
    check_h_norm_hypothesis(h, mu[0], kd.warnings);

    const double floor = basis.sigma_star / 4.0;
    auto sqrt_coeffs = [&](const std::vector<ScalarField>& coeffs) {
        std::vector<ScalarField> amps(basis.n_star, ScalarField(dom));
        for (int i = 0; i < basis.n_star; ++i)
            for (std::size_t p = 0; p < np; ++p) {
                const double c = coeffs[i][p];
                require(c >= floor, Error::Code::Numeric,
                        "kallen_decompose: decomposition failure, coefficient " +
                            std::to_string(c) + " below the amplitude floor sigma_star/4");
                amps[i][p] = std::sqrt(c);
            }
        return amps;
    };

    // depth j applies the correction map j+1 times starting from sqrt(L_i(h))
    kd.amplitudes = sqrt_coeffs(project_L_field(basis, h));
    for (int sweep = 0; sweep <= depth; ++sweep) {
        const MetricField D = gradient_correction(kd.amplitudes, mu, basis.n);
        MetricField target = h;
        for (std::size_t i = 0; i < target.data().size(); ++i) target.data()[i] -= D.data()[i];
        kd.amplitudes = sqrt_coeffs(project_L_field(basis, target));
    }

    const MetricField D = gradient_correction(kd.amplitudes, mu, basis.n);
    kd.residual = h;
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = kd.residual.at(p);
        const double* dsrc = D.at(p);
        int k = 0;
        for (int r = 0; r < dom.n; ++r)
            for (int c = r; c < dom.n; ++c) {
                double sum = 0.0;
                for (int i = 0; i < basis.n_star; ++i) {
                    const double a = kd.amplitudes[i][p];
                    sum += a * a * basis.basis_mats[i](r, c);
                }
                dst[k] -= sum + dsrc[k];
                ++k;
            }
    }
    return kd;
}

MetricField kallen_identity_residual(const PrimitiveBasis& basis, const MetricField& h,
                                     const KallenDecomposition& kd) {
    const GridDomain& dom = h.domain();
    const MetricField D = gradient_correction(kd.amplitudes, kd.mu, basis.n);
    MetricField res = h;
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = res.at(p);
        const double* dsrc = D.at(p);
        const double* esrc = kd.residual.at(p);
        int k = 0;
        for (int r = 0; r < dom.n; ++r)
            for (int c = r; c < dom.n; ++c) {
                double sum = 0.0;
                for (int i = 0; i < basis.n_star; ++i) {
                    const double a = kd.amplitudes[i][p];
                    sum += a * a * basis.basis_mats[i](r, c);
                }
                dst[k] -= sum + dsrc[k] + esrc[k];
                ++k;
            }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Oscillatory reduction
// ---------------------------------------------------------------------------

OscillatoryReduction oscillatory_reduce(const PrimitiveBasis& basis, const MetricField& Q,
                                        const PeriodicProfile& gamma, int i, double lambda,
                                        double mu, double K, int depth) {
    const GridDomain& dom = Q.domain();
    require_pre(dom.n == basis.n, "oscillatory_reduce: dimension mismatch");
    require_pre(i >= 1 && i <= basis.n, "oscillatory_reduce: direction index out of range");
    require_pre(lambda >= mu && mu >= 1.0, "oscillatory_reduce: need lambda >= mu >= 1");
    require_pre(depth >= 0, "oscillatory_reduce: depth must be nonnegative");
    require(gamma.is_zero_mean(), Error::Code::Precondition,
            "oscillatory_reduce: profile must have zero mean");
    fieldlab::check_nyquist(lambda, dom, "oscillatory_reduce");
    const Eigen::VectorXd& xi = basis.xi[i - 1];
    const double snapped = fieldlab::snap_frequency(lambda, xi, dom);
    require_pre(std::abs(snapped - lambda) <= 1e-9 * lambda,
                "oscillatory_reduce: lambda is not torus-commensurate along xi_i; snap it first");

    OscillatoryReduction red;
    red.depth = depth;
    red.lambda = lambda;
    red.mu = mu;
    red.direction = i;
    red.w = VectorField(dom, dom.n);
    red.R = MetricField(dom);

    if (fieldlab::sup_norm(Q) > K * 1.0000001)
        throw PreconditionError("oscillatory_reduce: ||Q||_0 exceeds the amplitude bound K");

    const std::vector<Eigen::VectorXd> pb = packed_basis(basis);
    const int nsym = Q.packed_size();
    const std::size_t np = dom.point_count();

    MetricField curQ = Q;
    PeriodicProfile cur_gamma = gamma;

    for (int round = 0; round < depth; ++round) {
        // split curQ through Phi_i pointwise
        VectorField alpha(dom, dom.n);
        std::vector<ScalarField> beta(basis.n_star - basis.n, ScalarField(dom));
        Eigen::VectorXd rhs(nsym);
        for (std::size_t p = 0; p < np; ++p) {
            const double* src = curQ.at(p);
            for (int k = 0; k < nsym; ++k) rhs(k) = src[k];
            const Eigen::VectorXd sol = basis.phi_lu[i - 1].solve(rhs);
            for (int a = 0; a < dom.n; ++a) alpha.at(p)[a] = sol(a);
            for (int b = 0; b < basis.n_star - basis.n; ++b) beta[b][p] = sol(basis.n + b);
        }

        const PeriodicProfile tilde = primitive(cur_gamma);
        const ScalarField tilde_vals = profile_on_phase(tilde, dom, lambda, xi);
        const ScalarField gamma_vals = profile_on_phase(cur_gamma, dom, lambda, xi);

        // w += (1/lambda) gamma~(t) alpha/2
        for (std::size_t p = 0; p < np; ++p) {
            const double s = tilde_vals[p] / (2.0 * lambda);
            double* wp = red.w.at(p);
            const double* ap = alpha.at(p);
            for (int a = 0; a < dom.n; ++a) wp[a] += s * ap[a];
        }

        // R += gamma(t) sum_k beta_k xi_k xi_k  (complementary span only)
        for (std::size_t p = 0; p < np; ++p) {
            double* rp = red.R.at(p);
            const double g = gamma_vals[p];
            for (int b = 0; b < basis.n_star - basis.n; ++b) {
                const double c = g * beta[b][p];
                for (int k = 0; k < nsym; ++k) rp[k] += c * pb[basis.n + b](k);
            }
        }

        // next remainder: -(1/lambda) sym(grad alpha)
        MetricField next = sym_gradient(alpha);
        for (double& v : next.data()) v *= -1.0 / lambda;
        curQ = std::move(next);
        cur_gamma = tilde;
    }

    red.gamma_out = cur_gamma;
    red.G = curQ;
    const double scale = std::pow(lambda / mu, depth);
    for (double& v : red.G.data()) v *= scale;
    return red;
}

MetricField oscillatory_gamma_term(const PrimitiveBasis& basis, const OscillatoryReduction& red) {
    const GridDomain& dom = red.G.domain();
    const ScalarField vals =
        profile_on_phase(red.gamma_out, dom, red.lambda, basis.xi[red.direction - 1]);
    const double gscale = std::pow(red.mu / red.lambda, red.depth);
    MetricField out = red.G;
    const int nsym = out.packed_size();
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = out.at(p);
        for (int k = 0; k < nsym; ++k) dst[k] *= gscale * vals[p];
    }
    return out;
}

MetricField oscillatory_identity_residual(const PrimitiveBasis& basis, const MetricField& Q,
                                          const PeriodicProfile& gamma,
                                          const OscillatoryReduction& red) {
    const GridDomain& dom = Q.domain();
    const Eigen::VectorXd& xi = basis.xi[red.direction - 1];
    const ScalarField gamma_vals = profile_on_phase(gamma, dom, red.lambda, xi);
    const ScalarField out_vals = profile_on_phase(red.gamma_out, dom, red.lambda, xi);
    const MetricField symw = sym_gradient(red.w);
    const double gscale = std::pow(red.mu / red.lambda, red.depth);

    MetricField res(dom);
    const int nsym = res.packed_size();
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = res.at(p);
        const double* q = Q.at(p);
        const double* sw = symw.at(p);
        const double* g = red.G.at(p);
        const double* r = red.R.at(p);
        for (int k = 0; k < nsym; ++k)
            dst[k] = gamma_vals[p] * q[k] - 2.0 * sw[k] - out_vals[p] * gscale * g[k] - r[k];
    }
    return res;
}

// ---------------------------------------------------------------------------
// Newton decomposition
// ---------------------------------------------------------------------------

namespace {

struct NewtonContext {
    const PrimitiveBasis& basis;
    const std::vector<Eigen::VectorXd>& pb;  // packed basis matrices
    int nbar;                                // offset of the b-amplitudes
    int half;                                // n/2
    double floor_b;                          // sigma_star/4 for a^2 - T
    double floor_a;                          // sqrt floor for amplitudes
};

/// Newton solve at a single point. h_packed is the target; T, Gk, Θkl are
/// point values. Returns amplitudes; iteration count via out-param.
Eigen::VectorXd newton_point_solve(const NewtonContext& ctx, const Eigen::VectorXd& h_packed,
                                   const Eigen::VectorXd& Tp,
                                   const std::vector<Eigen::VectorXd>& Gp,
                                   const std::vector<Eigen::VectorXd>& Thp,
                                   const Eigen::VectorXd& a_init, int& iters) {
    const int nstar = ctx.basis.n_star;
    const int nsym = static_cast<int>(h_packed.size());
    Eigen::VectorXd a = a_init;
    Eigen::VectorXd b(ctx.half), F(nsym);
    Eigen::MatrixXd Jac(nsym, nstar);

    auto eval_b = [&](const Eigen::VectorXd& av) {
        for (int k = 0; k < ctx.half; ++k) {
            const double v = av(ctx.nbar + k) * av(ctx.nbar + k) - Tp(k);
            require(v >= ctx.floor_b, Error::Code::Numeric,
                    "newton_decompose: amplitude floor violated, a^2 - T < sigma_star/4");
            b(k) = std::sqrt(v);
        }
    };

    for (iters = 0; iters < 50; ++iters) {
        eval_b(a);
        F = -h_packed;
        for (int i = 0; i < nstar; ++i) F += a(i) * a(i) * ctx.pb[i];
        for (int k = 0; k < ctx.half; ++k) F += b(k) * Gp[k];
        for (int k = 0; k < ctx.half; ++k)
            for (int l = 0; l < ctx.half; ++l) F += b(k) * b(l) * Thp[k * ctx.half + l];
        if (F.norm() <= 1e-12 * (1.0 + h_packed.norm())) return a;

        for (int m = 0; m < nstar; ++m) Jac.col(m) = 2.0 * a(m) * ctx.pb[m];
        for (int k = 0; k < ctx.half; ++k) {
            const int m = ctx.nbar + k;
            Eigen::VectorXd extra = Gp[k];
            for (int l = 0; l < ctx.half; ++l)
                extra += b(l) * (Thp[k * ctx.half + l] + Thp[l * ctx.half + k]);
            Jac.col(m) += (a(m) / b(k)) * extra;
        }
        const Eigen::VectorXd step = Jac.partialPivLu().solve(F);
        a -= step;
        for (int i = 0; i < nstar; ++i)
            require(a(i) >= ctx.floor_a, Error::Code::Numeric,
                    "newton_decompose: amplitude floor violated during iteration");
    }
    throw NumericError("newton_decompose: Newton did not converge within 50 iterations");
}

}  // namespace

NewtonDecomposition newton_decompose(const PrimitiveBasis& basis, const MetricField& h,
                                     const std::vector<ScalarField>& T,
                                     const std::vector<MetricField>& G,
                                     const std::vector<MetricField>& Theta,
                                     const std::vector<double>& mu, int depth, int n1, int n2,
                                     double hypothesis_tol_factor) {
    const GridDomain& dom = h.domain();
    const int n = basis.n;
    require_pre(n % 2 == 0 && n >= 4, "newton_decompose: n must be even and >= 4");
    const int half = n / 2;
    require_pre(static_cast<int>(T.size()) == half, "newton_decompose: need n/2 fields T_k");
    require_pre(static_cast<int>(G.size()) == half, "newton_decompose: need n/2 fields G_k");
    require_pre(static_cast<int>(Theta.size()) == half * half,
                "newton_decompose: need (n/2)^2 fields Theta_kl");
    require_pre(static_cast<int>(mu.size()) == basis.n_star + 1,
                "newton_decompose: need frequencies mu_0..mu_{n_star}");
    if (n1 < 0) n1 = n - 1;
    if (n2 < 0) n2 = n;
    require_pre(n1 >= 0 && n1 <= n - 1, "newton_decompose: n1 out of range");
    require_pre(n2 >= n && n2 <= 3 * n / 2 - 1, "newton_decompose: n2 out of range");
    const int nbar = n * (n1 - n + 1);
    require_pre(nbar >= 0 && nbar + half <= basis.n_star,
                "newton_decompose: amplitude offset out of range");

    NewtonDecomposition nd;
    nd.depth = depth;
    nd.mu = mu;

    // smallness hypothesis of the proposition, with sigma_hat = sigma_star/16
    double small = mu[0] / mu[1] + std::sqrt(mu[n2] / mu[n2 + 1]);
    {
        MetricField dev = h;
        const std::size_t np = dom.point_count();
        for (std::size_t p = 0; p < np; ++p) {
            double* v = dev.at(p);
            int k = 0;
            for (int r = 0; r < n; ++r)
                for (int c = r; c < n; ++c) v[k++] -= basis.h_star(r, c);
        }
        small += fieldlab::sup_norm(dev);
        for (const auto& t : T) small += fieldlab::sup_norm(t);
        for (const auto& g : G) small += fieldlab::sup_norm(g);
        for (const auto& th : Theta) small += fieldlab::sup_norm(th);
    }
    nd.hypothesis_value = small;
    const double sigma_hat = basis.sigma_star / 16.0;
    require(small <= 2.0 * sigma_hat * hypothesis_tol_factor, Error::Code::Precondition,
            "newton_decompose: deficit too large, hypothesis value " + std::to_string(small) +
                " > " + std::to_string(2.0 * sigma_hat * hypothesis_tol_factor));
    nd.ite01_ok = (mu[0] / mu[1]) * (mu[0] / mu[1]) >= mu[n2] / mu[n2 + 1];
    if (!nd.ite01_ok)
        nd.warnings.push_back("frequency hypothesis (mu_0/mu_1)^2 >= mu_{n2}/mu_{n2+1} fails");
    check_h_norm_hypothesis(h, mu[0], nd.warnings);

    const std::vector<Eigen::VectorXd> pb = packed_basis(basis);
    const NewtonContext ctx{basis, pb, nbar, half, basis.sigma_star / 4.0,
                            std::sqrt(basis.sigma_star) / 2.0};
    const int nsym = h.packed_size();
    const std::size_t np = dom.point_count();

    // sweep 0: Newton per point starting from a_i = sqrt(L_i(h))
    std::vector<ScalarField> init = project_L_field(basis, h);
    nd.amplitudes.assign(basis.n_star, ScalarField(dom));
    Eigen::VectorXd hp(nsym), Tp(half), a0(basis.n_star);
    std::vector<Eigen::VectorXd> Gp(half), Thp(half * half);
    nd.newton_iterations = 0;
    for (std::size_t p = 0; p < np; ++p) {
        const double* src = h.at(p);
        for (int k = 0; k < nsym; ++k) hp(k) = src[k];
        for (int k = 0; k < half; ++k) Tp(k) = T[k][p];
        for (int k = 0; k < half; ++k) {
            Gp[k].resize(nsym);
            const double* gs = G[k].at(p);
            for (int m = 0; m < nsym; ++m) Gp[k](m) = gs[m];
        }
        for (int k = 0; k < half * half; ++k) {
            Thp[k].resize(nsym);
            const double* ts = Theta[k].at(p);
            for (int m = 0; m < nsym; ++m) Thp[k](m) = ts[m];
        }
        for (int i = 0; i < basis.n_star; ++i) {
            const double c = init[i][p];
            require(c > 0.0, Error::Code::Numeric,
                    "newton_decompose: nonpositive initial coefficient");
            a0(i) = std::sqrt(c);
        }
        int iters = 0;
        const Eigen::VectorXd a = newton_point_solve(ctx, hp, Tp, Gp, Thp, a0, iters);
        nd.newton_iterations = std::max(nd.newton_iterations, iters);
        for (int i = 0; i < basis.n_star; ++i) nd.amplitudes[i][p] = a(i);
    }

    // later sweeps: plain basis resolve absorbing gradient + perturbation terms
    auto perturbation_field = [&](const std::vector<ScalarField>& amps) {
        MetricField f = gradient_correction(amps, mu, n);
        std::vector<double> bvals(half);
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = f.at(p);
            for (int k = 0; k < half; ++k) {
                const double v = amps[nbar + k][p] * amps[nbar + k][p] - T[k][p];
                require(v >= ctx.floor_b, Error::Code::Numeric,
                        "newton_decompose: amplitude floor violated in sweep");
                bvals[k] = std::sqrt(v);
            }
            for (int k = 0; k < half; ++k) {
                const double* gs = G[k].at(p);
                for (int m = 0; m < nsym; ++m) dst[m] += bvals[k] * gs[m];
            }
            for (int k = 0; k < half; ++k)
                for (int l = 0; l < half; ++l) {
                    const double* ts = Theta[k * half + l].at(p);
                    const double bb = bvals[k] * bvals[l];
                    for (int m = 0; m < nsym; ++m) dst[m] += bb * ts[m];
                }
        }
        return f;
    };

    const double floor_c = basis.sigma_star / 4.0;
    for (int sweep = 1; sweep <= depth; ++sweep) {
        const MetricField f = perturbation_field(nd.amplitudes);
        MetricField target = h;
        for (std::size_t i = 0; i < target.data().size(); ++i) target.data()[i] -= f.data()[i];
        std::vector<ScalarField> coeffs = project_L_field(basis, target);
        for (int i = 0; i < basis.n_star; ++i)
            for (std::size_t p = 0; p < np; ++p) {
                const double c = coeffs[i][p];
                require(c >= floor_c, Error::Code::Numeric,
                        "newton_decompose: coefficient below floor in sweep");
                nd.amplitudes[i][p] = std::sqrt(c);
            }
    }

    // closing residual with the final amplitudes
    const MetricField f = perturbation_field(nd.amplitudes);
    nd.residual = h;
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = nd.residual.at(p);
        const double* fs = f.at(p);
        for (int m = 0; m < nsym; ++m) {
            double sum = 0.0;
            for (int i = 0; i < basis.n_star; ++i) {
                const double a = nd.amplitudes[i][p];
                sum += a * a * pb[i](m);
            }
            dst[m] -= sum + fs[m];
        }
    }
    return nd;
}

MetricField newton_identity_residual(const PrimitiveBasis& basis, const MetricField& h,
                                     const std::vector<ScalarField>& T,
                                     const std::vector<MetricField>& G,
                                     const std::vector<MetricField>& Theta,
                                     const NewtonDecomposition& nd, int n1) {
    const GridDomain& dom = h.domain();
    const int n = basis.n;
    const int half = n / 2;
    if (n1 < 0) n1 = n - 1;
    const int nbar = n * (n1 - n + 1);
    const std::vector<Eigen::VectorXd> pb = packed_basis(basis);
    const int nsym = h.packed_size();
    const std::size_t np = dom.point_count();

    MetricField f = gradient_correction(nd.amplitudes, nd.mu, n);
    MetricField res = h;
    for (std::size_t p = 0; p < np; ++p) {
        double* dst = res.at(p);
        const double* fs = f.at(p);
        const double* es = nd.residual.at(p);
        std::vector<double> b(half);
        for (int k = 0; k < half; ++k)
            b[k] = std::sqrt(nd.amplitudes[nbar + k][p] * nd.amplitudes[nbar + k][p] - T[k][p]);
        for (int m = 0; m < nsym; ++m) {
            double sum = fs[m] + es[m];
            for (int i = 0; i < basis.n_star; ++i) {
                const double a = nd.amplitudes[i][p];
                sum += a * a * pb[i](m);
            }
            for (int k = 0; k < half; ++k) sum += b[k] * G[k].at(p)[m];
            for (int k = 0; k < half; ++k)
                for (int l = 0; l < half; ++l) sum += b[k] * b[l] * Theta[k * half + l].at(p)[m];
            dst[m] -= sum;
        }
    }
    return res;
}

}  // namespace cforge::decomp
