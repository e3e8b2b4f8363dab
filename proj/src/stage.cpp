#include "cforge/stage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

namespace cforge::stage {

using fieldlab::DiffScheme;
using fieldlab::GridDomain;
using fieldlab::ImmersionField;
using fieldlab::MetricField;
using fieldlab::ScalarField;
using fieldlab::VectorField;
using profiles::CorrugationProfile;
using profiles::PeriodicProfile;
using symcore::PrimitiveBasis;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

void axpy(MetricField& y, double a, const MetricField& x) {
    for (std::size_t i = 0; i < y.data().size(); ++i) y.data()[i] += a * x.data()[i];
}

MetricField metric_difference(const MetricField& a, const MetricField& b) {
    MetricField out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

/// Phase values lambda * x . xi over the grid.
ScalarField phase_field(const GridDomain& dom, double lambda, const Eigen::VectorXd& xi) {
    ScalarField f(dom);
    std::vector<int> c(dom.n);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        dom.unflatten(p, c.data());
        double phase = 0.0;
        for (int a = 0; a < dom.n; ++a) phase += xi(a) * dom.coord(c[a]);
        f[p] = lambda * phase;
    }
    return f;
}

const PeriodicProfile& sin_profile() {
    static const PeriodicProfile p = PeriodicProfile::harmonic_sin();
    return p;
}
const PeriodicProfile& cos_profile() {
    static const PeriodicProfile p = PeriodicProfile::harmonic_cos();
    return p;
}

ImmersionField clone_immersion(const ImmersionField& u) {
    ImmersionField out(u.domain(), u.d());
    out.affine() = u.affine();
    out.periodic() = u.periodic();
    return out;
}

VectorField periodic_difference(const ImmersionField& a, const ImmersionField& b) {
    VectorField diff(a.domain(), a.d());
    for (std::size_t idx = 0; idx < diff.data().size(); ++idx)
        diff.data()[idx] = a.periodic().data()[idx] - b.periodic().data()[idx];
    return diff;
}

}  // namespace

const PrimitiveBasis& shared_basis(int n) {
    static std::map<int, PrimitiveBasis> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, symcore::build_basis(n)).first;
    return it->second;
}

MetricField h_star_field(const PrimitiveBasis& basis, const GridDomain& dom) {
    MetricField f(dom);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) f.set_matrix(p, basis.h_star);
    return f;
}

// ---------------------------------------------------------------------------
// Parameters and schedule
// ---------------------------------------------------------------------------

GlobalParams make_global_params(int n, double eps, double deficit_scale, double a,
                                double lambda_star, double K_init) {
    require_pre(n >= 2, "make_global_params: n must be >= 2");
    require_pre(eps > 0.0 && eps < 2.0 / (n * n),
                "make_global_params: eps out of range (0, 2/n^2)");
    require_pre(a > 1.0, "make_global_params: base parameter a must exceed 1");
    require_pre(deficit_scale > 0.0, "make_global_params: deficit scale must be positive");

    GlobalParams gp;
    gp.n = n;
    gp.eps = eps;
    gp.theta = (n % 2 == 1) ? 1.0 / n - eps : 1.0 / (n + 1) - eps;
    require_pre(gp.theta > 0.0, "make_global_params: eps too large, theta <= 0");
    gp.b = 1.0 + eps * (n - 1) / 2.0;
    gp.vartheta = gp.b * (gp.theta + eps) * (1.0 - (n - 1) * eps);
    gp.alpha = eps * eps / 10.0;
    gp.J = static_cast<int>(std::floor(4.0 / ((n - 1) * eps))) + 3;
    gp.N_star = n * (n + 1) / 2;
    gp.tau = 2.0 * gp.vartheta * gp.b * (gp.N_star + 1) + gp.vartheta - gp.b;
    gp.a = a;
    gp.lambda_star = lambda_star;
    gp.K_init = K_init;
    // lambda_max(h_star) = n
    gp.delta_star = deficit_scale / (5.0 * n);

    const double ratio = gp.vartheta / gp.b;
    require(gp.theta < ratio && ratio < gp.theta + eps, Error::Code::Numeric,
            "make_global_params: exponent sanity theta < vartheta/b < theta+eps failed");
    return gp;
}

double delta_m(const GlobalParams& gp, int m) {
    return gp.delta_star * std::pow(gp.a, -2.0 * gp.vartheta * std::pow(gp.b, m));
}

double lambda_m(const GlobalParams& gp, int m) {
    return gp.lambda_star * std::pow(gp.a, std::pow(gp.b, m + 1) + gp.tau);
}

double tune_lambda_star(const GlobalParams& gp, double target_lambda00) {
    require_pre(target_lambda00 > 0.0, "tune_lambda_star: target must be positive");
    // 1/ell = lambda_0 a^alpha sqrt(delta_0/delta_1); solve for lambda_star
    const double lambda0 =
        target_lambda00 * std::pow(gp.a, -gp.alpha - gp.vartheta * (gp.b - 1.0));
    return lambda0 * std::pow(gp.a, -(gp.b + gp.tau));
}

StageSchedule make_schedule(const GlobalParams& gp, int m) {
    require_pre(m >= 0, "make_schedule: stage index must be nonnegative");
    StageSchedule s;
    s.m = m;
    s.w_depth = gp.w_depth;
    s.delta_m = delta_m(gp, m);
    s.delta_m1 = delta_m(gp, m + 1);
    s.delta_m2 = delta_m(gp, m + 2);
    s.lambda_m = lambda_m(gp, m);
    s.ell = std::sqrt(s.delta_m1) / (std::sqrt(s.delta_m) * s.lambda_m * std::pow(gp.a, gp.alpha));
    s.Lambda = s.delta_m1 * std::pow(gp.a, gp.alpha) / s.delta_m2;

    const int top = (3 * gp.n) / 2;  // (3n-1)/2 for odd n, 3n/2 for even n
    s.lambda_steps.resize(top + 1);
    s.lambda_steps[0] = 1.0 / s.ell;
    const double root = std::pow(s.Lambda, 1.0 / gp.J);
    for (int i = 1; i <= top; ++i)
        s.lambda_steps[i] = s.lambda_steps[i - 1] * (i <= gp.n ? root : s.Lambda);
    s.lambda_exec = s.lambda_steps;
    return s;
}

bool schedule_fits_grid(const StageSchedule& sched, const GridDomain& dom) {
    return sched.lambda_exec.back() <= fieldlab::nyquist_limit(dom);
}

void snap_schedule(StageSchedule& sched, const GridDomain& dom) {
    const double unit = kTau / dom.period;
    const double guard = fieldlab::nyquist_limit(dom);
    sched.lambda_exec = sched.lambda_steps;
    const int n_axis = dom.n;
    long long prev_k = 0;
    for (int i = 1; i < static_cast<int>(sched.lambda_exec.size()); ++i) {
        if (i <= n_axis) {
            const long long k = std::max(prev_k + 1, std::llround(sched.lambda_steps[i] / unit));
            sched.lambda_exec[i] = unit * static_cast<double>(k);
            prev_k = k;
        } else {
            // corrugation rungs follow the ladder recursion on executed values
            sched.lambda_exec[i] = sched.Lambda * sched.lambda_exec[i - 1];
        }
        require(sched.lambda_exec[i] <= guard, Error::Code::Precondition,
                "snap_schedule: ladder rung " + std::to_string(i) + " at frequency " +
                    std::to_string(sched.lambda_exec[i]) + " exceeds the grid guard " +
                    std::to_string(guard));
    }
}

// ---------------------------------------------------------------------------
// Trace output
// ---------------------------------------------------------------------------

void write_trace(const StageTrace& trace, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), Error::Code::Config, "write_trace: cannot open " + path);
    for (const TraceRecord& r : trace.records) {
        nlohmann::ordered_json j;
        j["stage"] = r.stage;
        j["step"] = r.step;
        j["kind"] = r.kind;
        j["deficit_before"] = r.deficit_before;
        j["deficit_after"] = r.deficit_after;
        nlohmann::ordered_json terms = nlohmann::ordered_json::array();
        for (const auto& [name, sup] : r.named_terms) {
            nlohmann::ordered_json t;
            t["name"] = name;
            t["sup"] = sup;
            terms.push_back(t);
        }
        j["named_terms"] = terms;
        j["residual_sup"] = r.residual_sup;
        j["c0_delta"] = r.c0_delta;
        j["c1_delta"] = r.c1_delta;
        j["c2_norm"] = r.c2_norm;
        out << j.dump() << '\n';
    }
    require(out.good(), Error::Code::Config, "write_trace: write failure on " + path);
}

// ---------------------------------------------------------------------------
// Spiral steps
// ---------------------------------------------------------------------------

SpiralCorrection spiral_correction(const PrimitiveBasis& basis, const ImmersionField& u,
                                   const ScalarField& amp, int i, const StageSchedule& sched,
                                   double delta) {
    const GridDomain& dom = u.domain();
    const double lambda = sched.lambda_exec[i];
    const double mu = std::max(1.0, sched.lambda_exec[i - 1]);
    const int d = u.d();

    SpiralCorrection corr;
    frames::NormalFrame frame = frames::build_frame(u);
    corr.zeta = std::move(frame.vectors[0]);
    corr.eta = std::move(frame.vectors[1]);

    // Q_{i,j} = (2 a_i / (delta^{1/2} lambda)) sym(grad u^T grad nu)
    auto coefficient = [&](const VectorField& nu) {
        MetricField q(dom);
        std::vector<VectorField> dnu;
        for (int axis = 0; axis < dom.n; ++axis) dnu.push_back(differentiate(nu, axis));
        const double scale = 2.0 / (std::sqrt(delta) * lambda);
        const std::size_t np = dom.point_count();
        Eigen::MatrixXd dn(d, dom.n);
        for (std::size_t p = 0; p < np; ++p) {
            const Eigen::MatrixXd J = u.jacobian(p);
            for (int axis = 0; axis < dom.n; ++axis) dn.col(axis) = dnu[axis].vec(p);
            const Eigen::MatrixXd prod = J.transpose() * dn;
            q.set_matrix(p, (scale * amp[p]) * 0.5 * (prod + prod.transpose()));
        }
        return q;
    };

    const MetricField q1 = coefficient(corr.zeta);
    const MetricField q2 = coefficient(corr.eta);
    const double k1 = fieldlab::sup_norm(q1) + 1e-300;
    const double k2 = fieldlab::sup_norm(q2) + 1e-300;
    corr.q_sup = std::max(k1, k2);

    corr.red_sin =
        decomp::oscillatory_reduce(basis, q1, sin_profile(), i, lambda, mu, k1 * 1.001, sched.w_depth);
    corr.red_cos =
        decomp::oscillatory_reduce(basis, q2, cos_profile(), i, lambda, mu, k2 * 1.001, sched.w_depth);

    corr.w = VectorField(dom, dom.n);
    for (std::size_t idx = 0; idx < corr.w.data().size(); ++idx)
        corr.w.data()[idx] = -(corr.red_sin.w.data()[idx] + corr.red_cos.w.data()[idx]);
    corr.R = corr.red_sin.R;
    axpy(corr.R, 1.0, corr.red_cos.R);
    return corr;
}

StepOutcome spiral_step(const PrimitiveBasis& basis, const ImmersionField& u,
                        const ScalarField& amp, int i, const StageSchedule& sched, double delta,
                        const SpiralCorrection* corr) {
    const GridDomain& dom = u.domain();
    require_pre(i >= 1 && i <= basis.n, "spiral_step: direction index out of range");
    const double lambda = sched.lambda_exec[i];
    fieldlab::check_nyquist(lambda, dom, "spiral_step");
    const Eigen::VectorXd& xi = basis.xi[i - 1];
    const int d = u.d();

    VectorField zeta, eta;
    if (corr) {
        zeta = corr->zeta;
        eta = corr->eta;
    } else {
        frames::NormalFrame frame = frames::build_frame(u);
        zeta = std::move(frame.vectors[0]);
        eta = std::move(frame.vectors[1]);
    }

    const MetricField pb_before = fieldlab::pullback_metric(u);
    const ScalarField phases = phase_field(dom, lambda, xi);

    ImmersionField next = clone_immersion(u);
    const double sqrt_delta = std::sqrt(delta);
    const std::size_t np = dom.point_count();

    VectorField F;
    if (corr) F = frames::tangential_correction(u);
    for (std::size_t p = 0; p < np; ++p) {
        const double s = std::sin(phases[p]);
        const double c = std::cos(phases[p]);
        const double a = sqrt_delta * amp[p] / lambda;
        double* dst = next.periodic().at(p);
        const double* zp = zeta.at(p);
        const double* ep = eta.at(p);
        for (int r = 0; r < d; ++r) dst[r] += a * (s * zp[r] + c * ep[r]);
        if (corr) {
            Eigen::Map<const Eigen::MatrixXd> Fp(F.at(p), d, dom.n);
            const Eigen::VectorXd fw = Fp * corr->w.vec(p);
            for (int r = 0; r < d; ++r) dst[r] += delta * fw(r);
        }
    }
    next.refresh_gradient();

    const MetricField pb_after = fieldlab::pullback_metric(next);
    MetricField residual = metric_difference(pb_after, pb_before);

    TraceRecord rec;
    rec.step = i;
    rec.kind = "spiral";

    const int nsym = residual.packed_size();
    // subtract delta a^2 xi xi
    {
        std::vector<double> xs(nsym);
        int k = 0;
        for (int r = 0; r < dom.n; ++r)
            for (int c = r; c < dom.n; ++c) xs[k++] = xi(r) * xi(c);
        double sup = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            const double coeff = delta * amp[p] * amp[p];
            sup = std::max(sup, coeff);
            double* dst = residual.at(p);
            for (int m = 0; m < nsym; ++m) dst[m] -= coeff * xs[m];
        }
        rec.named_terms.emplace_back("a2xi_sup", sup);
    }
    // subtract delta lambda^{-2} grad a (x) grad a
    {
        std::vector<ScalarField> grads;
        for (int axis = 0; axis < dom.n; ++axis) grads.push_back(differentiate(amp, axis));
        const double w = delta / (lambda * lambda);
        double sup = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = residual.at(p);
            double norm2 = 0.0;
            int k = 0;
            for (int r = 0; r < dom.n; ++r) {
                norm2 += grads[r][p] * grads[r][p];
                for (int c = r; c < dom.n; ++c) dst[k++] -= w * grads[r][p] * grads[c][p];
            }
            sup = std::max(sup, w * norm2);
        }
        rec.named_terms.emplace_back("grad_a_sup", sup);
    }
    if (corr) {
        axpy(residual, -delta, corr->R);
        rec.named_terms.emplace_back("R_sup", delta * fieldlab::sup_norm(corr->R));
        const MetricField g1 = decomp::oscillatory_gamma_term(basis, corr->red_sin);
        const MetricField g2 = decomp::oscillatory_gamma_term(basis, corr->red_cos);
        axpy(residual, -delta, g1);
        axpy(residual, -delta, g2);
        rec.named_terms.emplace_back("gammaG_sup",
                                     delta * (fieldlab::sup_norm(g1) + fieldlab::sup_norm(g2)));
        rec.named_terms.emplace_back("w_sup", fieldlab::sup_norm(corr->w));
        rec.named_terms.emplace_back("Q_sup", corr->q_sup);
    }
    rec.residual_sup = fieldlab::sup_norm(residual);

    const VectorField diff = periodic_difference(next, u);
    rec.c0_delta = fieldlab::sup_norm(diff);
    rec.c1_delta = fieldlab::seminorm(diff, 1);
    rec.c2_norm = fieldlab::seminorm(next.periodic(), 2);

    return {std::move(next), std::move(rec)};
}

// ---------------------------------------------------------------------------
// Corrugation rounds
// ---------------------------------------------------------------------------

namespace {

/// Direction indices (1-based) updated by round j.
std::vector<int> round_directions(int n, int round_j, Parity parity) {
    std::vector<int> dirs;
    if (parity == Parity::Odd) {
        for (int k = n * round_j + 1; k <= n * (round_j + 1); ++k) dirs.push_back(k);
    } else if (round_j == 1) {
        for (int k = n + 1; k <= 3 * n / 2; ++k) dirs.push_back(k);
    } else {
        for (int k = n * (round_j - 2) + 3 * n / 2 + 1; k <= n * (round_j - 1) + 3 * n / 2; ++k)
            dirs.push_back(k);
    }
    return dirs;
}

}  // namespace

StepOutcome corrugation_round(const PrimitiveBasis& basis, const ImmersionField& u,
                              const std::vector<ScalarField>& b, int round_j,
                              const StageSchedule& sched, double delta,
                              const CorrugationProfile& profile, Parity parity) {
    const GridDomain& dom = u.domain();
    const int n = basis.n;
    const int d = u.d();
    require_pre(round_j >= 1, "corrugation_round: round index must be >= 1");
    require_pre(static_cast<int>(b.size()) == basis.n_star - n,
                "corrugation_round: need amplitude fields for directions n+1..n_star");
    const bool spiral_variant = (parity == Parity::Even && round_j == 1);
    if (!spiral_variant)
        require_pre(n >= 3, "corrugation_round: corrugation-type rounds need n >= 3");

    const std::vector<int> dirs = round_directions(n, round_j, parity);
    require_pre(!dirs.empty() && dirs.back() <= basis.n_star && dirs.front() > n,
                "corrugation_round: direction bookkeeping out of range");
    const double lambda_nominal = sched.lambda_exec[n + round_j];

    std::vector<double> lambda(dirs.size());
    for (std::size_t l = 0; l < dirs.size(); ++l) {
        lambda[l] = fieldlab::snap_frequency(lambda_nominal, basis.xi[dirs[l] - 1], dom);
        fieldlab::check_nyquist(lambda[l], dom, "corrugation_round");
    }

    const MetricField pb_before = fieldlab::pullback_metric(u);
    const double sqrt_delta = std::sqrt(delta);
    const std::size_t np = dom.point_count();

    // amplitude-range guard: split the round into equal sub-rounds when the
    // corrugation argument would leave the profile table
    int subrounds = 1;
    if (!spiral_variant) {
        double sup_bt = 0.0;
        const VectorField F = frames::tangential_correction(u);
        for (std::size_t l = 0; l < dirs.size(); ++l) {
            const Eigen::VectorXd& xi = basis.xi[dirs[l] - 1];
            const ScalarField& bk = b[dirs[l] - n - 1];
            for (std::size_t p = 0; p < np; ++p) {
                Eigen::Map<const Eigen::MatrixXd> Fp(F.at(p), d, dom.n);
                const double zt = (Fp * xi).norm();
                sup_bt = std::max(sup_bt, sqrt_delta * zt * std::abs(bk[p]));
            }
        }
        if (sup_bt > profile.s_max) {
            subrounds =
                static_cast<int>(std::ceil((sup_bt / profile.s_max) * (sup_bt / profile.s_max)));
            require(subrounds <= 16, Error::Code::Numeric,
                    "corrugation_round: amplitude " + std::to_string(sup_bt) +
                        " exceeds the profile range s_max = " + std::to_string(profile.s_max) +
                        " beyond the splitting budget");
        }
    }
    const double sub_scale = 1.0 / std::sqrt(static_cast<double>(subrounds));

    ImmersionField cur = clone_immersion(u);
    cur.refresh_gradient();

    for (int sub = 0; sub < subrounds; ++sub) {
        frames::NormalFrame frame = frames::build_frame(cur);
        ImmersionField next = clone_immersion(cur);

        if (spiral_variant) {
            for (std::size_t l = 0; l < dirs.size(); ++l) {
                const Eigen::VectorXd& xi = basis.xi[dirs[l] - 1];
                const ScalarField& bk = b[dirs[l] - n - 1];
                const ScalarField phases = phase_field(dom, lambda[l], xi);
                const VectorField& zv = frame.vectors[2 * l];
                const VectorField& ev = frame.vectors[2 * l + 1];
                for (std::size_t p = 0; p < np; ++p) {
                    const double bt = sqrt_delta * bk[p] * sub_scale;
                    const double a = bt / lambda[l];
                    const double s = std::sin(phases[p]);
                    const double c = std::cos(phases[p]);
                    double* dst = next.periodic().at(p);
                    const double* zp = zv.at(p);
                    const double* ep = ev.at(p);
                    for (int r = 0; r < d; ++r) dst[r] += a * (s * zp[r] + c * ep[r]);
                }
            }
        } else {
            const VectorField F = frames::tangential_correction(cur);
            for (std::size_t l = 0; l < dirs.size(); ++l) {
                const Eigen::VectorXd& xi = basis.xi[dirs[l] - 1];
                const ScalarField& bk = b[dirs[l] - n - 1];
                const ScalarField phases = phase_field(dom, lambda[l], xi);
                const VectorField& ev = frame.vectors[l];
                for (std::size_t p = 0; p < np; ++p) {
                    Eigen::Map<const Eigen::MatrixXd> Fp(F.at(p), d, dom.n);
                    const Eigen::VectorXd zt = Fp * xi;
                    const double ztn = zt.norm();
                    const double bt = sqrt_delta * ztn * bk[p] * sub_scale;
                    double g1, g2;
                    profile.eval(bt, phases[p], g1, g2);
                    const double wz = g1 / (lambda[l] * ztn * ztn);
                    const double we = g2 / (lambda[l] * ztn);
                    double* dst = next.periodic().at(p);
                    const double* ep = ev.at(p);
                    for (int r = 0; r < d; ++r) dst[r] += wz * zt(r) + we * ep[r];
                }
            }
        }
        next.refresh_gradient();
        cur = std::move(next);
    }

    const MetricField pb_after = fieldlab::pullback_metric(cur);
    MetricField residual = metric_difference(pb_after, pb_before);

    TraceRecord rec;
    rec.step = n + round_j;
    rec.kind = spiral_variant ? "spiral-round" : "corrugation";
    if (subrounds > 1) rec.named_terms.emplace_back("subrounds", subrounds);

    // subtract delta sum_k b_k^2 xi_k xi_k
    double named_sup = 0.0;
    const int nsym = residual.packed_size();
    std::vector<double> xs(nsym);
    for (std::size_t l = 0; l < dirs.size(); ++l) {
        const Eigen::VectorXd& xi = basis.xi[dirs[l] - 1];
        const ScalarField& bk = b[dirs[l] - n - 1];
        int k = 0;
        for (int r = 0; r < dom.n; ++r)
            for (int c = r; c < dom.n; ++c) xs[k++] = xi(r) * xi(c);
        for (std::size_t p = 0; p < np; ++p) {
            const double coeff = delta * bk[p] * bk[p];
            named_sup = std::max(named_sup, coeff);
            double* dst = residual.at(p);
            for (int m = 0; m < nsym; ++m) dst[m] -= coeff * xs[m];
        }
    }
    rec.named_terms.emplace_back("b2xi_sup", named_sup);
    rec.residual_sup = fieldlab::sup_norm(residual);

    const VectorField diff = periodic_difference(cur, u);
    rec.c0_delta = fieldlab::sup_norm(diff);
    rec.c1_delta = fieldlab::seminorm(diff, 1);
    rec.c2_norm = fieldlab::seminorm(cur.periodic(), 2);

    return {std::move(cur), std::move(rec)};
}

// ---------------------------------------------------------------------------
// Full stage
// ---------------------------------------------------------------------------

StageResult run_stage(const ImmersionField& u_m, const MetricField& g, const GlobalParams& gp,
                      int m, const CorrugationProfile& profile) {
    const GridDomain& dom = u_m.domain();
    require_pre(g.domain() == dom, "run_stage: domain mismatch");
    const PrimitiveBasis& basis = shared_basis(gp.n);
    const bool strict = gp.mode == Mode::Strict;

    StageSchedule sched = make_schedule(gp, m);
    snap_schedule(sched, dom);
    const double delta = sched.delta_m1;

    StageResult result;
    StageTrace& trace = result.trace;

    ImmersionField u0 = clone_immersion(u_m);
    u0.refresh_gradient();

    const MetricField hstar = h_star_field(basis, dom);
    {
        const MetricField pb = fieldlab::pullback_metric(u0);
        MetricField gm = g;
        axpy(gm, -delta, hstar);
        result.deficit_before = fieldlab::sup_norm(metric_difference(g, pb));
        result.deficit_before_gm = fieldlab::sup_norm(metric_difference(gm, pb));
    }
    {
        TraceRecord rec;
        rec.stage = m;
        rec.step = 0;
        rec.kind = "precheck";
        rec.deficit_before = result.deficit_before;
        rec.named_terms.emplace_back("gm_deficit", result.deficit_before_gm);
        rec.named_terms.emplace_back("bound_sigma0_delta", basis.sigma_0 * delta);
        rec.named_terms.emplace_back("pass",
                                     result.deficit_before_gm <= basis.sigma_0 * delta ? 1.0 : 0.0);
        trace.append(rec);
        if (result.deficit_before_gm > basis.sigma_0 * delta && strict)
            throw StrictModeError(
                "run_stage: hypothesis ||g_m - u_m^# e|| <= sigma_0 delta_{m+1} fails: " +
                std::to_string(result.deficit_before_gm) + " > " +
                std::to_string(basis.sigma_0 * delta));
    }

    // mollification
    double ell = sched.ell;
    if (ell >= dom.period / 4.0) {
        if (strict) throw StrictModeError("run_stage: mollification length exceeds the torus budget");
        ell = 0.249 * dom.period;
    }
    ImmersionField u = fieldlab::mollify(u0, ell);
    u.refresh_gradient();
    const MetricField g_ell = fieldlab::mollify(g, ell);

    // h_m = (g*phi - (u*phi)^# e - delta_{m+2} h_*) / delta_{m+1}
    MetricField h_m = metric_difference(g_ell, fieldlab::pullback_metric(u));
    axpy(h_m, -sched.delta_m2, hstar);
    for (double& v : h_m.data()) v /= delta;

    // amplitude extraction; mu_0 is clamped into the monotone ladder (the
    // formula value 1/ell can exceed the first executed rung on desk grids)
    std::vector<double> mu(gp.n + 1);
    mu[0] = std::min(std::max(1.0, 1.0 / ell), sched.lambda_exec[1]);
    for (int i = 1; i <= gp.n; ++i) mu[i] = sched.lambda_exec[i];
    const decomp::KallenDecomposition kd =
        decomp::kallen_decompose(basis, h_m, mu, gp.kallen_depth, strict ? 1.0 : gp.hypothesis_tol);
    {
        TraceRecord rec;
        rec.stage = m;
        rec.step = 0;
        rec.kind = "kallen";
        rec.named_terms.emplace_back("hypothesis_value", kd.hypothesis_value);
        rec.named_terms.emplace_back("hypothesis_strict", kd.hypothesis_strict ? 1.0 : 0.0);
        rec.named_terms.emplace_back("residual_E_sup", fieldlab::sup_norm(kd.residual));
        rec.residual_sup = fieldlab::sup_norm(decomp::kallen_identity_residual(basis, h_m, kd));
        trace.append(rec);
    }

    // n spiral steps with oscillatory correctors
    MetricField R_total(dom);
    for (int i = 1; i <= gp.n; ++i) {
        const SpiralCorrection corr = spiral_correction(basis, u, kd.amplitudes[i - 1], i, sched, delta);
        StepOutcome out = spiral_step(basis, u, kd.amplitudes[i - 1], i, sched, delta, &corr);
        axpy(R_total, 1.0, corr.R);
        out.record.stage = m;
        trace.append(out.record);
        u = std::move(out.u);
    }

    // amplitude update b_k = sqrt(a_k^2 - L_k(R))
    std::vector<ScalarField> b(basis.n_star - gp.n, ScalarField(dom));
    {
        const std::vector<ScalarField> lr = decomp::project_L_field(basis, R_total);
        double tangential_leak = 0.0;
        for (int i = 0; i < gp.n; ++i)
            tangential_leak = std::max(tangential_leak, fieldlab::sup_norm(lr[i]));
        const double floor = basis.sigma_star / 4.0;
        const std::size_t np = dom.point_count();
        for (int k = gp.n; k < basis.n_star; ++k)
            for (std::size_t p = 0; p < np; ++p) {
                const double v = kd.amplitudes[k][p] * kd.amplitudes[k][p] - lr[k][p];
                require(v >= floor, Error::Code::Numeric,
                        "run_stage: amplitude floor violated in the update b = sqrt(a^2 - L(R))");
                b[k - gp.n][p] = std::sqrt(v);
            }
        TraceRecord rec;
        rec.stage = m;
        rec.step = gp.n;
        rec.kind = "amplitude-update";
        rec.named_terms.emplace_back("R_sup", fieldlab::sup_norm(R_total));
        rec.named_terms.emplace_back("tangential_leak", tangential_leak);
        trace.append(rec);
    }

    // corrugation rounds
    const Parity parity = (gp.n % 2 == 1) ? Parity::Odd : Parity::Even;
    const int rounds = (gp.n % 2 == 1) ? (gp.n - 1) / 2 : gp.n / 2;
    for (int j = 1; j <= rounds; ++j) {
        StepOutcome out = corrugation_round(basis, u, b, j, sched, delta, profile, parity);
        out.record.stage = m;
        trace.append(out.record);
        u = std::move(out.u);
    }

    // contract checks
    u.refresh_gradient();
    const MetricField pb = fieldlab::pullback_metric(u);
    result.deficit_after = fieldlab::sup_norm(metric_difference(g, pb));
    {
        MetricField gm1 = g;
        axpy(gm1, -sched.delta_m2, hstar);
        result.deficit_after_gm = fieldlab::sup_norm(metric_difference(gm1, pb));
    }
    {
        const VectorField diff = periodic_difference(u, u_m);
        const double c0 = fieldlab::sup_norm(diff);
        const double c1 = fieldlab::seminorm(diff, 1);
        const double c2 = fieldlab::seminorm(u.periodic(), 2);
        const double sqrt_delta = std::sqrt(delta);
        const double c2_bound = sqrt_delta * lambda_m(gp, m + 1);

        TraceRecord rec;
        rec.stage = m;
        rec.step = gp.n + rounds + 1;
        rec.kind = "contract";
        rec.deficit_before = result.deficit_before;
        rec.deficit_after = result.deficit_after;
        rec.c0_delta = c0;
        rec.c1_delta = c1;
        rec.c2_norm = c2;
        rec.named_terms.emplace_back("c0_bound", sqrt_delta);
        rec.named_terms.emplace_back("c0_pass", c0 <= sqrt_delta ? 1.0 : 0.0);
        rec.named_terms.emplace_back("c1_constant", c1 / sqrt_delta);
        rec.named_terms.emplace_back("c2_bound", c2_bound);
        rec.named_terms.emplace_back("c2_pass", c2 <= c2_bound ? 1.0 : 0.0);
        rec.named_terms.emplace_back("gm1_deficit", result.deficit_after_gm);
        rec.named_terms.emplace_back("gm1_bound", basis.sigma_0 * sched.delta_m2);
        trace.append(rec);
        if (strict) {
            if (c0 > sqrt_delta)
                throw StrictModeError("run_stage: ||u_{m+1} - u_m||_0 exceeds delta^{1/2}");
            if (c2 > c2_bound)
                throw StrictModeError(
                    "run_stage: ||grad^2 u_{m+1}||_0 exceeds delta^{1/2} lambda_{m+1}");
            if (result.deficit_after_gm > basis.sigma_0 * sched.delta_m2)
                throw StrictModeError("run_stage: post-stage deficit exceeds sigma_0 delta_{m+2}");
        }
    }

    result.u = std::move(u);
    return result;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

InitResult init_short(const MetricField& g, const ImmersionField& u_bar, const GlobalParams& gp) {
    const GridDomain& dom = u_bar.domain();
    require_pre(g.domain() == dom, "init_short: domain mismatch");
    const PrimitiveBasis& basis = shared_basis(gp.n);
    const bool strict = gp.mode == Mode::Strict;
    const double delta1 = delta_m(gp, 1);

    ImmersionField ub = clone_immersion(u_bar);
    ub.refresh_gradient();

    // shortness: g - u_bar^# e >= 5 delta_* h_* pointwise
    {
        MetricField margin = metric_difference(g, fieldlab::pullback_metric(ub));
        axpy(margin, -5.0 * gp.delta_star, h_star_field(basis, dom));
        const double lo = margin.min_eigenvalue();
        require(lo >= -1e-12, Error::Code::Precondition,
                "init_short: u_bar is not strictly short (margin eigenvalue " + std::to_string(lo) +
                    ")");
    }

    // ell-bar = sigma_0 delta_1 / (2 ||g||_1), torus-capped
    const double g_norm1 = fieldlab::sup_norm(g) + fieldlab::seminorm(g, 1);
    const double ell = std::min(basis.sigma_0 * delta1 / (2.0 * g_norm1), 0.249 * dom.period);

    InitResult result;
    StageTrace& trace = result.trace;

    ImmersionField u = fieldlab::mollify(ub, ell);
    u.refresh_gradient();
    const MetricField g_ell = fieldlab::mollify(g, ell);

    // decompose the mollified deficit minus delta_1 h_* in the fixed basis
    MetricField target = metric_difference(g_ell, fieldlab::pullback_metric(u));
    axpy(target, -delta1, h_star_field(basis, dom));
    std::vector<ScalarField> rho = decomp::project_L_field(basis, target);

    // uniform h_* lift when a coefficient dips below the floor
    const double floor = 0.01 * delta1;
    double min_coeff = std::numeric_limits<double>::infinity();
    for (const auto& r : rho)
        for (std::size_t p = 0; p < r.size(); ++p) min_coeff = std::min(min_coeff, r[p]);
    result.lift = std::max(0.0, floor - min_coeff);
    if (result.lift > 0.0)
        for (auto& r : rho)
            for (std::size_t p = 0; p < r.size(); ++p) r[p] += result.lift;
    {
        TraceRecord rec;
        rec.kind = "init-decompose";
        rec.named_terms.emplace_back("min_coefficient", min_coeff);
        rec.named_terms.emplace_back("lift", result.lift);
        rec.named_terms.emplace_back("ell", ell);
        trace.append(rec);
    }

    // Spiral ladder mu_i = K mu_{i-1} along nu_i = xi_i. The formula start
    // 1/ell-bar is far beyond any desk grid, so the ladder starts just above
    // the measured bandwidth of the coefficient fields instead.
    const double guard = fieldlab::nyquist_limit(dom);
    double bandwidth = 0.0;
    for (const auto& r0 : rho) {
        const double sup = fieldlab::sup_norm(r0);
        if (sup > 1e-12) bandwidth = std::max(bandwidth, fieldlab::seminorm(r0, 1) / sup);
    }
    double mu_prev = std::max(kTau / dom.period, 2.0 * bandwidth);
    const std::size_t np = dom.point_count();
    for (int i = 1; i <= gp.N_star; ++i) {
        const Eigen::VectorXd& nu = basis.xi[i - 1];
        const double mu_i =
            fieldlab::snap_frequency(std::max(mu_prev * gp.K_init, mu_prev + 1.0), nu, dom);
        require(mu_i <= guard, Error::Code::Precondition,
                "init_short: ladder frequency " + std::to_string(mu_i) +
                    " exceeds the grid guard; reduce K or refine the grid");
        const ScalarField phases = phase_field(dom, mu_i, nu);
        frames::NormalFrame frame = frames::build_frame(u);
        const MetricField pb_before = fieldlab::pullback_metric(u);

        for (std::size_t p = 0; p < np; ++p) {
            const double a = std::sqrt(rho[i - 1][p]) / mu_i;
            const double s = std::sin(phases[p]);
            const double c = std::cos(phases[p]);
            double* dst = u.periodic().at(p);
            const double* zp = frame.vectors[0].at(p);
            const double* ep = frame.vectors[1].at(p);
            for (int r = 0; r < u.d(); ++r) dst[r] += a * (s * zp[r] + c * ep[r]);
        }
        u.refresh_gradient();

        MetricField residual = metric_difference(fieldlab::pullback_metric(u), pb_before);
        const int nsym = residual.packed_size();
        std::vector<double> xs(nsym);
        {
            int k = 0;
            for (int r = 0; r < dom.n; ++r)
                for (int c = r; c < dom.n; ++c) xs[k++] = nu(r) * nu(c);
        }
        for (std::size_t p = 0; p < np; ++p) {
            double* dst = residual.at(p);
            for (int k = 0; k < nsym; ++k) dst[k] -= rho[i - 1][p] * xs[k];
        }
        TraceRecord rec;
        rec.step = i;
        rec.kind = "init-spiral";
        rec.named_terms.emplace_back("mu", mu_i);
        rec.named_terms.emplace_back("amp_sup", std::sqrt(fieldlab::sup_norm(rho[i - 1])));
        rec.residual_sup = fieldlab::sup_norm(residual);
        trace.append(rec);
        mu_prev = mu_i;
    }

    // measured contract
    {
        MetricField dev = metric_difference(g, fieldlab::pullback_metric(u));
        axpy(dev, -delta1, h_star_field(basis, dom));
        result.measured_deficit = fieldlab::sup_norm(dev);
    }
    {
        const VectorField diff = periodic_difference(u, ub);
        const double ubar_c1 =
            fieldlab::sup_norm(ub.periodic()) + fieldlab::seminorm(ub.periodic(), 1);
        const double u0_c1 = fieldlab::sup_norm(u.periodic()) + fieldlab::seminorm(u.periodic(), 1);
        result.g_star_measured = u0_c1 - ubar_c1;
        result.k_star_measured = fieldlab::seminorm(diff, 1);

        TraceRecord rec;
        rec.kind = "init-contract";
        rec.named_terms.emplace_back("deficit_to_delta1_hstar", result.measured_deficit);
        rec.named_terms.emplace_back("bound_sigma0_delta1", basis.sigma_0 * delta1);
        rec.named_terms.emplace_back(
            "pass", result.measured_deficit <= basis.sigma_0 * delta1 ? 1.0 : 0.0);
        rec.named_terms.emplace_back("G_star_measured", result.g_star_measured);
        rec.named_terms.emplace_back("K_star_measured", result.k_star_measured);
        rec.c0_delta = fieldlab::sup_norm(diff);
        trace.append(rec);
        if (strict && result.measured_deficit > basis.sigma_0 * delta1)
            throw StrictModeError("init_short: post-init deficit " +
                                  std::to_string(result.measured_deficit) +
                                  " exceeds sigma_0 delta_1");
    }

    result.u = std::move(u);
    return result;
}

// ---------------------------------------------------------------------------
// Multi-stage driver
// ---------------------------------------------------------------------------

RunResult run(const MetricField& g, const ImmersionField& u_bar, const GlobalParams& gp,
              int stages, const CorrugationProfile& profile) {
    require_pre(stages >= 1, "run: need at least one stage");
    const GridDomain& dom = u_bar.domain();

    RunResult result;
    InitResult init = init_short(g, u_bar, gp);
    result.trace.extend(init.trace);
    result.u = std::move(init.u);
    {
        result.u.refresh_gradient();
        result.deficit_history.push_back(
            fieldlab::sup_norm(metric_difference(g, fieldlab::pullback_metric(result.u))));
    }

    for (int m = 0; m < stages; ++m) {
        StageSchedule sched = make_schedule(gp, m);
        bool feasible = std::isfinite(sched.lambda_steps.back());
        if (feasible) {
            try {
                snap_schedule(sched, dom);
            } catch (const PreconditionError&) {
                feasible = false;
            }
        }
        if (!feasible) {
            result.truncated = true;
            result.truncation_reason =
                "stage " + std::to_string(m) + ": frequency ladder no longer fits the grid";
            TraceRecord rec;
            rec.stage = m;
            rec.kind = "truncation";
            result.trace.append(rec);
            break;
        }

        ImmersionField prev = clone_immersion(result.u);
        StageResult sr = run_stage(result.u, g, gp, m, profile);
        result.trace.extend(sr.trace);
        result.u = std::move(sr.u);
        result.deficit_history.push_back(sr.deficit_after);
        result.stages_done = m + 1;

        // interpolation bookkeeping on the increment
        {
            const VectorField diff = periodic_difference(result.u, prev);
            const double n1 = fieldlab::sup_norm(diff) + fieldlab::seminorm(diff, 1);
            const double n2 = n1 + fieldlab::seminorm(diff, 2);
            TraceRecord rec;
            rec.stage = m;
            rec.kind = "interpolation";
            rec.c1_delta = n1;
            rec.c2_norm = n2;
            for (double tp : {gp.theta / 4.0, gp.theta / 2.0, 0.75 * gp.theta, gp.theta}) {
                const double h = fieldlab::holder_seminorm_c1(diff, tp);
                const double bound = std::pow(n1, 1.0 - tp) * std::pow(n2, tp);
                rec.named_terms.emplace_back("holder_" + std::to_string(tp), h);
                rec.named_terms.emplace_back("interp_const_" + std::to_string(tp),
                                             bound > 0 ? (n1 + h) / bound : 0.0);
            }
            result.trace.append(rec);
        }
    }
    return result;
}

}  // namespace cforge::stage
