#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>

#include "cforge/cli.hpp"
#include "cforge/decomp.hpp"
#include "cforge/frames.hpp"
#include "cforge/profiles.hpp"

namespace cforge::cli {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

using fieldlab::GridDomain;
using fieldlab::ImmersionField;
using fieldlab::MetricField;
using fieldlab::ScalarField;
using fieldlab::VectorField;
using symcore::PrimitiveBasis;

struct VerifyContext {
    std::ostream& log;
    int failures = 0;

    void report(const std::string& name, bool pass, double value, const std::string& note = "") {
        log << "  [" << (pass ? "pass" : "FAIL") << "] " << std::left << std::setw(42) << name
            << std::setprecision(6) << value << (note.empty() ? "" : "  (" + note + ")") << "\n";
        if (!pass) ++failures;
    }
};

MetricField constant_metric(const GridDomain& dom, const Eigen::MatrixXd& m) {
    MetricField f(dom);
    for (std::size_t p = 0; p < f.points(); ++p) f.set_matrix(p, m);
    return f;
}

void check_symcore(VerifyContext& ctx) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int n : {2, 3, 4, 5, 6}) {
        const PrimitiveBasis& basis = stage::shared_basis(n);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::MatrixXd m(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    m(i, j) = unif(rng);
                    m(j, i) = m(i, j);
                }
            const symcore::SymMatrix h(m);
            const symcore::SymMatrix back = assemble(basis, project_L(basis, h));
            worst = std::max(worst, (back.mat() - h.mat()).norm() / (1.0 + h.frobenius()));
            for (int dir = 1; dir <= n; ++dir) {
                const symcore::PhiSolution s = solve_phi(basis, dir, 1.0, h);
                const symcore::SymMatrix phi_back = apply_phi(basis, dir, 1.0, s.alpha, s.beta);
                worst = std::max(worst, (phi_back.mat() - h.mat()).norm() / (1.0 + h.frobenius()));
            }
        }
        ctx.report("symcore round-trips n=" + std::to_string(n), worst <= 1e-11, worst);
        const double exact = symcore::exact_sigma_star(basis);
        ctx.report("sigma_star within exact margin n=" + std::to_string(n),
                   basis.sigma_star > 0 && basis.sigma_star <= exact, basis.sigma_star,
                   "exact " + std::to_string(exact));
    }
}

void check_fieldlab(VerifyContext& ctx) {
    const GridDomain dom(2, 1.0, 64);
    const double mass = fieldlab::mollifier_mass(dom, 0.11);
    ctx.report("mollifier kernel mass", std::abs(mass - 1.0) < 1e-13, mass);

    ScalarField f = fieldlab::synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(2, 0));
    ScalarField df = differentiate(f, 0);
    ScalarField expect = fieldlab::synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(2, 0), true);
    double err = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p)
        err = std::max(err, std::abs(df[p] - kTau * expect[p]));
    ctx.report("spectral derivative exact on harmonics", err < 1e-10, err);

    ScalarField mf = fieldlab::mollify(f, 0.05);
    ctx.report("mollification sup-norm nonincreasing",
               fieldlab::sup_norm(mf) <= fieldlab::sup_norm(f) * (1 + 1e-12),
               fieldlab::sup_norm(mf));
}

void check_profiles(VerifyContext& ctx, bool full) {
    const double s_max = profiles::default_s_max();
    const profiles::CorrugationProfile prof =
        profiles::build_corrugation(s_max, full ? 257 : 65, full ? 512 : 128);
    double worst = 0.0;
    for (int si = 0; si < prof.s_samples; ++si) {
        const double s = prof.s_grid[si];
        for (int tj = 0; tj < prof.t_samples; ++tj) {
            const double d1 = prof.table(prof.dt_gamma1, si, tj);
            const double d2 = prof.table(prof.dt_gamma2, si, tj);
            worst = std::max(worst, std::abs((1 + d1) * (1 + d1) + d2 * d2 - (1 + s * s)));
        }
    }
    ctx.report("corrugation identity on the table", worst < 1e-9, worst);
    const double fval = profiles::solve_f(1e-3, s_max);
    ctx.report("f(s)/(2s^2) near 1 at s=1e-3", std::abs(fval / 2e-6 - 1.0) < 0.02, fval / 2e-6);

    const profiles::PeriodicProfile prim = primitive(profiles::PeriodicProfile::harmonic_sin());
    ctx.report("primitive keeps zero mean", prim.is_zero_mean(), prim.mean());
}

void check_frames(VerifyContext& ctx) {
    const GridDomain dom(2, 1.0, 32);
    ImmersionField u = ImmersionField::inclusion(dom);
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        std::vector<int> c(2);
        dom.unflatten(p, c.data());
        u.periodic().at(p)[2] = 0.05 * std::sin(kTau * dom.coord(c[0]));
        u.periodic().at(p)[3] = 0.05 * std::cos(kTau * dom.coord(c[1]));
    }
    u.refresh_gradient();
    const frames::NormalFrame frame = frames::build_frame(u);
    double worst = 0.0;
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        const Eigen::MatrixXd J = u.jacobian(p);
        for (int i = 0; i < frame.count(); ++i) {
            worst = std::max(worst, (J.transpose() * frame.vectors[i].vec(p)).cwiseAbs().maxCoeff());
            for (int j = 0; j < frame.count(); ++j) {
                const double dot = frame.vectors[i].vec(p).dot(frame.vectors[j].vec(p));
                worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
            }
        }
    }
    ctx.report("normal frame residuals", worst <= 1e-10, worst);

    const VectorField F = frames::tangential_correction(u);
    double fres = 0.0;
    for (std::size_t p = 0; p < dom.point_count(); ++p) {
        Eigen::Map<const Eigen::MatrixXd> Fp(F.at(p), 4, 2);
        fres = std::max(
            fres, (u.jacobian(p).transpose() * Fp - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff());
    }
    ctx.report("tangential correction (grad u)^T F = Id", fres <= 1e-10, fres);
}

void check_decomp(VerifyContext& ctx, bool full) {
    const PrimitiveBasis& basis = stage::shared_basis(3);
    const GridDomain dom(3, 1.0, full ? 32 : 16);
    MetricField h = constant_metric(dom, basis.h_star);
    const ScalarField wave = fieldlab::synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(3, 0));
    for (std::size_t p = 0; p < h.points(); ++p)
        h.set_matrix(p, h.matrix(p) + 0.3 * wave[p] * basis.basis_mats[0]);
    const std::vector<double> mu = {kTau, 8 * kTau, 8 * kTau, 8 * kTau};
    const decomp::KallenDecomposition kd = decomp::kallen_decompose(basis, h, mu, 1, 4.0);
    const double res = fieldlab::sup_norm(decomp::kallen_identity_residual(basis, h, kd));
    ctx.report("kallen reconstruction identity", res <= 1e-9 * (1 + fieldlab::sup_norm(h)), res);
    double amin = 1e300;
    for (const auto& a : kd.amplitudes)
        for (std::size_t p = 0; p < a.size(); ++p) amin = std::min(amin, a[p]);
    ctx.report("kallen amplitude floor", amin >= std::sqrt(basis.sigma_star) / 2.0, amin);

    // oscillatory identity with constant coefficient
    Eigen::MatrixXd m0(3, 3);
    m0 << 0.4, 0.1, -0.2, 0.1, -0.3, 0.05, -0.2, 0.05, 0.2;
    const MetricField q = constant_metric(dom, m0);
    const double lam = fieldlab::snap_frequency(12.0, basis.xi[0], dom);
    const decomp::OscillatoryReduction red = decomp::oscillatory_reduce(
        basis, q, profiles::PeriodicProfile::harmonic_sin(), 1, lam, 1.0, 1.0, 1);
    const double ores = fieldlab::sup_norm(
        decomp::oscillatory_identity_residual(basis, q, profiles::PeriodicProfile::harmonic_sin(), red));
    ctx.report("oscillatory reduction identity", ores <= 1e-8, ores);
    const auto coeffs = decomp::project_L_field(basis, red.R);
    double leak = 0.0;
    for (int i = 0; i < basis.n; ++i) leak = std::max(leak, fieldlab::sup_norm(coeffs[i]));
    ctx.report("oscillatory R in the complementary span", leak <= 1e-10, leak);

    if (full) {
        // residual scaling across depths
        std::vector<double> norms;
        for (int depth : {0, 1, 2})
            norms.push_back(
                fieldlab::sup_norm(decomp::kallen_decompose(basis, h, mu, depth, 4.0).residual));
        const double r2 = (mu[0] / mu[1]) * (mu[0] / mu[1]);
        bool in_window = true;
        for (int j = 0; j + 1 < 3; ++j) {
            const double r = norms[j + 1] / norms[j];
            in_window = in_window && r > 0.3 * r2 && r < 1.5 * r2;
        }
        ctx.report("kallen depth scaling", in_window, norms[1] / norms[0] / r2,
                   "normalized successive ratio");
    }
}

void check_newton(VerifyContext& ctx) {
    const PrimitiveBasis& basis = stage::shared_basis(4);
    const GridDomain dom(4, 1.0, 8);
    const MetricField h = constant_metric(dom, basis.h_star);
    std::vector<ScalarField> T(2, ScalarField(dom, 0.0));
    std::vector<MetricField> G(2, MetricField(dom));
    std::vector<MetricField> Theta(4, MetricField(dom));
    G[0] = constant_metric(dom, Eigen::MatrixXd(0.01 * basis.basis_mats[4]));
    std::vector<double> mu(basis.n_star + 1, 8e6);
    mu[0] = 1.0;
    for (int i = 1; i <= 4; ++i) mu[i] = 200.0;
    const decomp::NewtonDecomposition nd = decomp::newton_decompose(basis, h, T, G, Theta, mu, 1,
                                                                    -1, -1, 2.0);
    const double res = fieldlab::sup_norm(decomp::newton_identity_residual(basis, h, T, G, Theta, nd));
    ctx.report("newton reconstruction identity", res <= 1e-9, res);
    ctx.report("newton iteration budget", nd.newton_iterations <= 6,
               static_cast<double>(nd.newton_iterations));
}

void check_audit(VerifyContext& ctx) {
    bool all = true;
    double min_margin = 1e300;
    for (int n : {3, 4, 5, 6})
        for (double eps : {0.001, 0.005, 0.01, 0.02}) {
            if (eps >= 2.0 / (n * n)) continue;
            const audit::AuditReport r = audit::audit_exponents(n, eps, n * (n + 1) / 2);
            all = all && r.all_pass();
            for (const auto& c : r.checks) min_margin = std::min(min_margin, c.margin());
        }
    ctx.report("exponent audit grid", all, min_margin, "minimum margin");
}

void check_spiral_scaling(VerifyContext& ctx) {
    // lambda-halving of the spiral residual on a curved base
    const PrimitiveBasis& basis = stage::shared_basis(3);
    const GridDomain dom(3, 1.0, 64);
    const double delta = 1e-4;

    auto residual_at = [&](double lambda_nominal) {
        ImmersionField u = ImmersionField::inclusion(dom);
        std::vector<int> c(3);
        for (std::size_t p = 0; p < dom.point_count(); ++p) {
            dom.unflatten(p, c.data());
            u.periodic().at(p)[3] = 0.02 * std::sin(kTau * dom.coord(c[0]));
            u.periodic().at(p)[4] = 0.02 * std::cos(kTau * dom.coord(c[1]));
        }
        u.refresh_gradient();
        stage::StageSchedule sched;
        sched.lambda_exec = {1.0, fieldlab::snap_frequency(lambda_nominal, basis.xi[0], dom)};
        sched.w_depth = 1;
        ScalarField amp(dom, 1.0);
        const ScalarField mod = fieldlab::synth_plane_wave(dom, kTau, Eigen::VectorXd::Unit(3, 1));
        for (std::size_t p = 0; p < amp.size(); ++p) amp[p] = 1.0 + 0.2 * mod[p];
        stage::StepOutcome out = stage::spiral_step(basis, u, amp, 1, sched, delta, nullptr);
        return out.record.residual_sup;
    };
    const double r1 = residual_at(16.0), r2 = residual_at(32.0);
    const double ratio = r2 / r1;
    ctx.report("spiral residual halves when lambda doubles", ratio > 0.375 && ratio < 0.625, ratio);
}

void check_mini_stage(VerifyContext& ctx) {
    const GridDomain dom(3, 1.0, 32);
    stage::GlobalParams gp = stage::make_global_params(3, 0.21, 0.05, 6300.0, 1.0, 2.0);
    gp.lambda_star = stage::tune_lambda_star(gp, 5.0);
    gp.mode = stage::Mode::Relaxed;
    gp.w_depth = 2;

    ImmersionField u = ImmersionField::inclusion(dom);
    u.refresh_gradient();
    MetricField g = fieldlab::pullback_metric(u);
    const double delta1 = stage::delta_m(gp, 1);
    const auto& basis = stage::shared_basis(3);
    for (std::size_t p = 0; p < g.points(); ++p)
        g.set_matrix(p, g.matrix(p) + delta1 * basis.h_star);

    const profiles::CorrugationProfile profile = profiles::build_corrugation(1.0, 65, 256);
    const stage::StageResult sr = stage::run_stage(u, g, gp, 0, profile);
    ctx.report("stage reduces the manufactured deficit",
               sr.deficit_after < sr.deficit_before, sr.deficit_after / sr.deficit_before,
               "post/pre");
}

}  // namespace

int cmd_verify(const std::string& suite, std::ostream& log) {
    require(suite == "fast" || suite == "full", Error::Code::Config,
            "verify: unknown suite '" + suite + "' (use fast or full)");
    const bool full = suite == "full";
    VerifyContext ctx{log};
    log << "verification suite: " << suite << "\n";
    check_symcore(ctx);
    check_fieldlab(ctx);
    check_profiles(ctx, full);
    check_frames(ctx);
    check_decomp(ctx, full);
    check_newton(ctx);
    check_audit(ctx);
    if (full) {
        check_spiral_scaling(ctx);
        check_mini_stage(ctx);
    }
    log << (ctx.failures == 0 ? "all checks passed\n"
                              : std::to_string(ctx.failures) + " check(s) failed\n");
    return ctx.failures == 0 ? 0 : 4;
}

int cmd_audit(int n, double eps, int N_star, std::ostream& log) {
    try {
        const audit::AuditReport report = audit::audit_exponents(n, eps, N_star);
        log << audit::format_report_table(report);
        audit::write_report_records(report, log);
        return report.all_pass() ? 0 : 4;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return e.exit_code();
    }
}

}  // namespace cforge::cli
