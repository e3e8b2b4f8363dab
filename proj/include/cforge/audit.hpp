#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cforge/stage.hpp"

namespace cforge::audit {

struct Check {
    std::string id;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
    double margin() const { return rhs - lhs; }
};

struct AuditReport {
    int n = 0;
    double eps = 0.0;
    int N_star = 0;
    double theta = 0.0, b = 0.0, vartheta = 0.0, tau = 0.0, alpha = 0.0, beta = 0.0;
    int J = 0;
    std::vector<Check> checks;

    bool all_pass() const;
    const Check* find(const std::string& id) const;
};

/// Evaluates the whole inequality chain gating the scheme for (n, eps):
/// the parameter sanity bounds, the odd/even second-derivative inequalities,
/// the exponent sandwich, and the auxiliary bounds from the proposition.
AuditReport audit_exponents(int n, double eps, int N_star);

/// Smallest integer stage index past which the interpolation exponent of the
/// increments turns negative.
int stage_index_threshold(const stage::GlobalParams& gp);

/// Independent route for the same threshold: scan of the sign change.
int stage_index_threshold_scan(const stage::GlobalParams& gp, int max_m = 100000);

struct DecayFit {
    bool sufficient = false;      // needs >= 3 stages
    bool monotone = true;
    double slope = 0.0;           // fitted d/dm of log log(1/deficit); target log b
    double quality = 0.0;         // R^2 of the fit
    std::vector<double> stage_factors;  // deficit_{m+1} / deficit_m
};

DecayFit fit_decay(const std::vector<double>& deficits);

/// Line-delimited structured records, one per check.
void write_report_records(const AuditReport& report, std::ostream& out);

/// Human-readable table.
std::string format_report_table(const AuditReport& report);

}  // namespace cforge::audit
