// Batch driver: run | audit | export-mesh | verify.
//
// Exit codes: 0 ok, 2 config, 3 precondition, 4 numeric failure,
// 5 strict-mode violation.

#include <CLI11.hpp>
#include <iostream>

#include "cforge/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cforge: convex-integration engine for isometric immersions"};
    app.require_subcommand(1);

    std::string config_path, out_override, mode_override, suite = "fast";
    std::uint64_t seed_override = 0;

    CLI::App* run = app.add_subcommand("run", "execute a configured scenario");
    run->add_option("--config", config_path, "configuration file")->required();
    run->add_option("--out", out_override, "output directory override");
    run->add_option("--mode", mode_override, "strict|relaxed override");
    CLI::Option* seed_opt = run->add_option("--seed", seed_override, "seed override");

    int audit_n = 3, audit_nstar = 0;
    double audit_eps = 0.01;
    CLI::App* aud = app.add_subcommand("audit", "machine-check the exponent arithmetic");
    aud->add_option("n", audit_n, "dimension (>= 3)")->required();
    aud->add_option("eps", audit_eps, "accuracy parameter")->required();
    aud->add_option("N_star", audit_nstar, "initialization step count (default n(n+1)/2)");

    std::string mesh_snapshot, mesh_out = "mesh.obj", mesh_projection = "first-3-coords";
    CLI::App* mesh = app.add_subcommand("export-mesh", "write a Wavefront OBJ surface (n=2)");
    mesh->add_option("snapshot", mesh_snapshot, "immersion snapshot path")->required();
    mesh->add_option("--out", mesh_out, "output OBJ path");
    mesh->add_option("--projection", mesh_projection, "first-3-coords|pca3");

    CLI::App* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--suite", suite, "fast|full");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            cforge::cli::RunConfig cfg = cforge::cli::parse_config_file(config_path);
            if (!out_override.empty()) cfg.out_dir = out_override;
            if (seed_opt->count() > 0) cfg.seed = seed_override;
            if (!mode_override.empty()) {
                if (mode_override == "strict")
                    cfg.mode = cforge::stage::Mode::Strict;
                else if (mode_override == "relaxed")
                    cfg.mode = cforge::stage::Mode::Relaxed;
                else
                    throw cforge::ConfigError("--mode must be strict or relaxed");
            }
            return cforge::cli::cmd_run(cfg, std::cout);
        }
        if (aud->parsed()) {
            if (audit_nstar == 0) audit_nstar = audit_n * (audit_n + 1) / 2;
            return cforge::cli::cmd_audit(audit_n, audit_eps, audit_nstar, std::cout);
        }
        if (mesh->parsed())
            return cforge::cli::cmd_export_mesh(mesh_snapshot, mesh_out, mesh_projection,
                                                std::cout);
        if (verify->parsed()) return cforge::cli::cmd_verify(suite, std::cout);
    } catch (const cforge::Error& e) {
        std::cout << "error: " << e.what() << "\n";
        return e.exit_code();
    }
    return 2;
}
