#include <filesystem>
#include <fstream>
#include <ostream>

#include "cforge/cli.hpp"

namespace cforge::cli {

using fieldlab::GridDomain;
using fieldlab::ImmersionField;
using fieldlab::MetricField;

namespace {

double min_eig_deficit(const MetricField& g, ImmersionField& u) {
    u.refresh_gradient();
    const MetricField pb = fieldlab::pullback_metric(u);
    MetricField d = g;
    for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] -= pb.data()[i];
    return d.min_eigenvalue();
}

}  // namespace

Scenario build_scenario(const RunConfig& cfg) {
    if (cfg.scenario == "custom") {
        Scenario s{fieldlab::load_metric_snapshot(cfg.metric_snapshot),
                   fieldlab::load_immersion_snapshot(cfg.immersion_snapshot), 0.0};
        require(s.g.domain() == s.u_bar.domain(), Error::Code::Config,
                "scenario: metric and immersion snapshots disagree on the grid");
        s.deficit_scale = min_eig_deficit(s.g, s.u_bar);
        require(s.deficit_scale > 0.0, Error::Code::Precondition,
                "scenario: custom input is not strictly short");
        return s;
    }

    const GridDomain dom(cfg.n, cfg.period, cfg.points_per_axis);
    const auto& basis = stage::shared_basis(cfg.n);
    require_pre(cfg.deficit > 0.0, "scenario: deficit must be positive");

    if (cfg.scenario == "manufactured-deficit") {
        // g = u_bar^# e + deficit * h_*, the exactly h_*-aligned start
        ImmersionField u = ImmersionField::inclusion(dom);
        u.refresh_gradient();
        MetricField g = fieldlab::pullback_metric(u);
        const std::size_t np = dom.point_count();
        for (std::size_t p = 0; p < np; ++p)
            g.set_matrix(p, g.matrix(p) + cfg.deficit * basis.h_star);
        Scenario s{std::move(g), std::move(u), 0.0};
        s.deficit_scale = cfg.deficit * cfg.n / 2.0;  // lambda_min(h_*) = n/2
        return s;
    }

    // shrunk-inclusion: u_bar = r * inclusion against the cone-aligned target
    // g = r^2 I + deficit * h_* (the initialization decomposes the deficit in
    // the fixed basis, so the target metric lives in that cone)
    require_pre(cfg.shrink > 0.0 && cfg.shrink < 1.0, "scenario: shrink must lie in (0,1)");
    ImmersionField u = ImmersionField::inclusion(dom, cfg.shrink);
    u.refresh_gradient();
    MetricField g = fieldlab::pullback_metric(u);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p)
        g.set_matrix(p, g.matrix(p) + cfg.deficit * basis.h_star);
    Scenario s{std::move(g), std::move(u), cfg.deficit * cfg.n / 2.0};
    return s;
}

int cmd_run(const RunConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    try {
        Scenario scenario = build_scenario(cfg);
        const double scale = scenario.deficit_scale;
        stage::GlobalParams gp =
            stage::make_global_params(cfg.n, cfg.eps, scale, cfg.a, cfg.lambda_star, cfg.k_init);
        gp.mode = cfg.mode;
        gp.w_depth = cfg.w_depth;
        gp.kallen_depth = cfg.kallen_depth;
        gp.hypothesis_tol = cfg.hypothesis_tol;

        const double s_max = cfg.s_max > 0.0 ? cfg.s_max : profiles::default_s_max();
        const profiles::CorrugationProfile profile = profiles::build_corrugation(s_max, 257, 1024);

        fs::create_directories(cfg.out_dir);
        const stage::RunResult result =
            stage::run(scenario.g, scenario.u_bar, gp, cfg.stages, profile);

        if (cfg.export_traces)
            stage::write_trace(result.trace, (fs::path(cfg.out_dir) / "trace.jsonl").string());
        fieldlab::save_snapshot((fs::path(cfg.out_dir) / "u_final.cfield").string(), result.u);
        fieldlab::save_snapshot((fs::path(cfg.out_dir) / "g.cfield").string(), scenario.g);
        if (cfg.export_csv) {
            profiles::write_f_csv(profile, (fs::path(cfg.out_dir) / "profile_f.csv").string());
            profiles::write_gamma_csv(profile, (fs::path(cfg.out_dir) / "profile_gamma.csv").string());
        }
        if (cfg.export_mesh && cfg.n == 2)
            export_mesh_obj(result.u, (fs::path(cfg.out_dir) / "u_final.obj").string(),
                            "first-3-coords");

        std::ofstream summary(fs::path(cfg.out_dir) / "summary.txt");
        summary << "scenario: " << cfg.scenario << "\n";
        summary << "n=" << cfg.n << " eps=" << cfg.eps << " a=" << cfg.a
                << " grid=" << cfg.points_per_axis << " period=" << cfg.period
                << " seed=" << cfg.seed << "\n";
        summary << "stages requested=" << cfg.stages << " done=" << result.stages_done << "\n";
        if (result.truncated) summary << "truncated: " << result.truncation_reason << "\n";
        summary << "deficit history (||g - u_m^# e||_0):\n";
        for (std::size_t i = 0; i < result.deficit_history.size(); ++i)
            summary << "  m=" << i << "  " << result.deficit_history[i] << "\n";
        if (result.deficit_history.size() >= 3) {
            const audit::DecayFit fit = audit::fit_decay(result.deficit_history);
            summary << "decay fit: slope=" << fit.slope << " (log b=" << std::log(gp.b)
                    << ") quality=" << fit.quality << (fit.sufficient ? "" : " [insufficient data]")
                    << "\n";
        }
        log << "run complete: " << result.stages_done << " stage(s), deficit "
            << result.deficit_history.front() << " -> " << result.deficit_history.back()
            << (result.truncated ? " (truncated)" : "") << "\n";
        bool monotone = true;
        for (std::size_t i = 0; i + 1 < result.deficit_history.size(); ++i)
            monotone = monotone && result.deficit_history[i + 1] < result.deficit_history[i];
        log << "deficit monotone decreasing: " << (monotone ? "yes" : "no") << "\n";
        return 0;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return e.exit_code();
    }
}

}  // namespace cforge::cli
