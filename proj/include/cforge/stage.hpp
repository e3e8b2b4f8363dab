#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cforge/decomp.hpp"
#include "cforge/fieldlab.hpp"
#include "cforge/frames.hpp"
#include "cforge/profiles.hpp"
#include "cforge/symcore.hpp"

namespace cforge::stage {

enum class Mode { Strict, Relaxed };

/// All scalar parameters shared by every stage of a run.
struct GlobalParams {
    int n = 0;
    double eps = 0.0;
    double theta = 0.0;     // 1/n - eps (odd), 1/(n+1) - eps (even)
    double b = 0.0;         // 1 + eps (n-1)/2
    double vartheta = 0.0;  // b (theta+eps)(1-(n-1) eps)
    double alpha = 0.0;     // eps^2/10
    int J = 0;              // floor(4/((n-1) eps)) + 3
    double tau = 0.0;       // 2 vartheta b (N_star+1) + vartheta - b
    double a = 0.0;         // base parameter > 1
    double delta_star = 0.0;
    double lambda_star = 1.0;
    int N_star = 0;  // n(n+1)/2 under the constructive initialization
    double K_init = 8.0;

    // execution knobs
    Mode mode = Mode::Relaxed;
    int w_depth = 1;       // corrector depth inside spiral steps
    int kallen_depth = 1;  // depth of the amplitude extraction
    double hypothesis_tol = 16.0;  // relaxed-mode multiplier on the 2 sigma_0 ball
};

/// Evaluates the parameter formulas; delta_star = deficit_scale / (5 lambda_max(h_star)).
GlobalParams make_global_params(int n, double eps, double deficit_scale, double a,
                                double lambda_star = 1.0, double K_init = 8.0);

double delta_m(const GlobalParams& gp, int m);
double lambda_m(const GlobalParams& gp, int m);

/// lambda_star making the stage-0 ladder start at lambda_{0,0} = target
/// (i.e. the mollification frequency 1/ell lands on a grid-resolvable value).
double tune_lambda_star(const GlobalParams& gp, double target_lambda00);

/// All scalar parameters of one stage.
struct StageSchedule {
    int m = 0;
    double delta_m = 0.0, delta_m1 = 0.0, delta_m2 = 0.0;
    double lambda_m = 0.0;
    double ell = 0.0;     // mollification length
    double Lambda = 0.0;  // frequency ratio
    std::vector<double> lambda_steps;  // nominal ladder lambda_{m,0..floor(3n/2)}
    std::vector<double> lambda_exec;   // grid-commensurate ladder actually synthesized
    int w_depth = 1;
};

StageSchedule make_schedule(const GlobalParams& gp, int m);

/// True when the top of the (nominal) ladder respects the grid guard.
bool schedule_fits_grid(const StageSchedule& sched, const fieldlab::GridDomain& dom);

/// Replaces lambda_exec with torus-commensurate, strictly increasing
/// frequencies for the spiral rungs (the corrugation rungs are snapped per
/// direction at synthesis time). Throws past the grid guard.
void snap_schedule(StageSchedule& sched, const fieldlab::GridDomain& dom);

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

struct TraceRecord {
    int stage = 0;
    int step = 0;
    std::string kind;
    double deficit_before = 0.0;
    double deficit_after = 0.0;
    std::vector<std::pair<std::string, double>> named_terms;
    double residual_sup = 0.0;
    double c0_delta = 0.0;
    double c1_delta = 0.0;
    double c2_norm = 0.0;
};

struct StageTrace {
    std::vector<TraceRecord> records;
    void append(TraceRecord r) { records.push_back(std::move(r)); }
    void extend(const StageTrace& other) {
        records.insert(records.end(), other.records.begin(), other.records.end());
    }
};

/// Line-delimited JSON records with the fixed field names.
void write_trace(const StageTrace& trace, const std::string& path);

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

/// Corrector bundle for one spiral step: frame, measured oscillatory
/// coefficients and their reductions.
struct SpiralCorrection {
    fieldlab::VectorField zeta, eta;  // the two normal fields used
    fieldlab::VectorField w;          // R^n corrector (- sum of the reduction w's)
    fieldlab::MetricField R;          // R_{i,1} + R_{i,2}
    decomp::OscillatoryReduction red_sin, red_cos;
    double q_sup = 0.0;               // max of the measured ||Q_{i,j}||_0
};

/// Computes frames, Q_{i,1/2} and their reductions for step i at the
/// executed frequency sched.lambda_exec[i].
SpiralCorrection spiral_correction(const symcore::PrimitiveBasis& basis,
                                   const fieldlab::ImmersionField& u,
                                   const fieldlab::ScalarField& amp, int i,
                                   const StageSchedule& sched, double delta);

struct StepOutcome {
    fieldlab::ImmersionField u;
    TraceRecord record;
};

/// One Nash-spiral step in direction xi_i at frequency sched.lambda_exec[i].
/// With corr == nullptr the corrector is empty (w = 0) and only the leading
/// terms are subtracted in the trace.
StepOutcome spiral_step(const symcore::PrimitiveBasis& basis, const fieldlab::ImmersionField& u,
                        const fieldlab::ScalarField& amp, int i, const StageSchedule& sched,
                        double delta, const SpiralCorrection* corr);

enum class Parity { Odd, Even };

/// One corrugation round (round_j >= 1). b holds the amplitude fields for
/// directions n+1..n_star (index k-n-1). For even parity, round 1 is the
/// Nash-spiral variant. Amplitudes beyond the profile range split the round
/// into equal sub-rounds.
StepOutcome corrugation_round(const symcore::PrimitiveBasis& basis,
                              const fieldlab::ImmersionField& u,
                              const std::vector<fieldlab::ScalarField>& b, int round_j,
                              const StageSchedule& sched, double delta,
                              const profiles::CorrugationProfile& profile, Parity parity);

// ---------------------------------------------------------------------------
// Stage, initialization, driver
// ---------------------------------------------------------------------------

struct StageResult {
    fieldlab::ImmersionField u;
    StageTrace trace;
    double deficit_before = 0.0;      // ||g - u_m^# e||_0
    double deficit_after = 0.0;       // ||g - u_{m+1}^# e||_0
    double deficit_before_gm = 0.0;   // ||g_m - u_m^# e||_0
    double deficit_after_gm = 0.0;    // ||g_{m+1} - u_{m+1}^# e||_0
};

StageResult run_stage(const fieldlab::ImmersionField& u_m, const fieldlab::MetricField& g,
                      const GlobalParams& gp, int m, const profiles::CorrugationProfile& profile);

struct InitResult {
    fieldlab::ImmersionField u;
    StageTrace trace;
    double measured_deficit = 0.0;  // ||g - delta_1 h_* - u_0^# e||_0
    double lift = 0.0;              // uniform h_* lift applied to the coefficients
    double g_star_measured = 0.0;   // ||u_0||_1 - ||u_bar||_1
    double k_star_measured = 0.0;   // ||grad(u_0 - u_bar)||_0
};

/// Constructive initialization: basis-coefficient decomposition of the
/// mollified deficit with an h_* lift when a coefficient dips, followed by
/// N_star plain spirals on the ladder mu_i = K mu_{i-1}.
InitResult init_short(const fieldlab::MetricField& g, const fieldlab::ImmersionField& u_bar,
                      const GlobalParams& gp);

struct RunResult {
    fieldlab::ImmersionField u;
    StageTrace trace;
    std::vector<double> deficit_history;  // ||g - u_m^# e||_0 incl. post-init
    int stages_done = 0;
    bool truncated = false;
    std::string truncation_reason;
};

RunResult run(const fieldlab::MetricField& g, const fieldlab::ImmersionField& u_bar,
              const GlobalParams& gp, int stages, const profiles::CorrugationProfile& profile);

/// Cached basis per dimension (the margin estimation is deterministic, so
/// sharing is sound).
const symcore::PrimitiveBasis& shared_basis(int n);

/// Constant h_star field over a domain.
fieldlab::MetricField h_star_field(const symcore::PrimitiveBasis& basis,
                                   const fieldlab::GridDomain& dom);

}  // namespace cforge::stage
