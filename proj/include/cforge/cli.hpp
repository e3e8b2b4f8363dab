#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "cforge/audit.hpp"
#include "cforge/fieldlab.hpp"
#include "cforge/stage.hpp"

namespace cforge::cli {

/// Parsed run configuration (INI-style sections, unknown keys rejected).
struct RunConfig {
    // [run]
    int n = 3;
    double eps = 0.21;
    double a = 1e4;
    int stages = 1;
    stage::Mode mode = stage::Mode::Relaxed;
    std::uint64_t seed = 1;
    // [grid]
    int points_per_axis = 32;
    double period = 1.0;
    // [scenario]
    std::string scenario = "manufactured-deficit";
    double deficit = 0.05;  // h_* multiple of the initial deficit
    double shrink = 0.98;   // inclusion scale for shrunk-inclusion
    std::string metric_snapshot;     // custom scenario inputs
    std::string immersion_snapshot;
    // [schedule]
    double lambda_star = 1.0;
    double k_init = 8.0;
    int w_depth = 1;
    int kallen_depth = 1;
    double hypothesis_tol = 16.0;
    double s_max = 0.0;  // 0: profile default
    // [output]
    std::string out_dir = "out";
    bool export_traces = true;
    bool export_mesh = false;
    bool export_csv = false;
};

RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig parse_config_file(const std::string& path);

struct Scenario {
    fieldlab::MetricField g;
    fieldlab::ImmersionField u_bar;
    double deficit_scale = 0.0;  // inf over the grid of lambda_min(g - u_bar^# e)
};

Scenario build_scenario(const RunConfig& cfg);

/// Executes a configured run, writing traces/snapshots/summary under
/// cfg.out_dir. Returns the process exit code.
int cmd_run(const RunConfig& cfg, std::ostream& log);

/// Exponent audit; exit 0 iff all checks pass.
int cmd_audit(int n, double eps, int N_star, std::ostream& log);

/// Wavefront OBJ export of an n=2 immersion snapshot.
void export_mesh_obj(const fieldlab::ImmersionField& u, const std::string& path,
                     const std::string& projection);
int cmd_export_mesh(const std::string& snapshot_path, const std::string& out_path,
                    const std::string& projection, std::ostream& log);

/// Property suites; suite is "fast" or "full". Exit 0 iff all checks pass.
int cmd_verify(const std::string& suite, std::ostream& log);

}  // namespace cforge::cli
