#include "cforge/audit.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace cforge::audit {

bool AuditReport::all_pass() const {
    for (const Check& c : checks)
        if (!c.pass) return false;
    return true;
}

const Check* AuditReport::find(const std::string& id) const {
    for (const Check& c : checks)
        if (c.id == id) return &c;
    return nullptr;
}

AuditReport audit_exponents(int n, double eps, int N_star) {
    require_pre(n >= 3, "audit_exponents: n must be >= 3");
    require_pre(eps > 0.0 && eps < 2.0 / (n * n), "audit_exponents: eps out of range (0, 2/n^2)");
    require_pre(N_star >= n * (n + 1) / 2, "audit_exponents: N_star must be at least n(n+1)/2");

    AuditReport r;
    r.n = n;
    r.eps = eps;
    r.N_star = N_star;
    r.theta = (n % 2 == 1) ? 1.0 / n - eps : 1.0 / (n + 1) - eps;
    r.b = 1.0 + eps * (n - 1) / 2.0;
    r.vartheta = r.b * (r.theta + eps) * (1.0 - (n - 1) * eps);
    r.alpha = eps * eps / 10.0;
    r.J = static_cast<int>(std::floor(4.0 / ((n - 1) * eps))) + 3;
    r.tau = 2.0 * r.vartheta * r.b * (N_star + 1) + r.vartheta - r.b;

    const double b = r.b, th = r.theta, vt = r.vartheta, al = r.alpha;
    const double J = static_cast<double>(r.J);
    const bool odd = (n % 2 == 1);
    r.beta = odd ? (J * (n - 1) * (b - 1) + 2.0 * b * n) / (J * n)
                 : (J * n * (b - 1) + 2.0 * b * n) / (J * (n + 1));

    auto add_lt = [&](const std::string& id, double lhs, double rhs) {
        r.checks.push_back({id, lhs, rhs, lhs < rhs});
    };
    auto add_le = [&](const std::string& id, double lhs, double rhs) {
        r.checks.push_back({id, lhs, rhs, lhs <= rhs});
    };

    if (odd) {
        add_lt("z08a",
               1.0 - vt / b + (2.0 * vt * (b - 1.0) + b * al) * (J * (n - 1) + 2.0 * n) / (2.0 * J),
               b - vt);
        add_lt("z08b", al * (J * (n + 1) + 2.0 * n) / (2.0 * J),
               b * (b - 1.0) * (1.0 - vt * (n + 2.0 * n / J - (b - 1.0) / b)));
    } else {
        add_lt("z18a", 1.0 - vt / b + n * (2.0 * vt * (b - 1.0) + b * al) * (J + 2.0) / (2.0 * J),
               b - vt);
        add_lt("z18b", al * (J * (n + 2) + 2.0 * n) / (2.0 * J),
               b * (b - 1.0) * (1.0 - vt * (n + 1.0 + 2.0 * n / J - (b - 1.0) / b)));
    }

    add_lt("w006_lower", th, vt / b);
    add_lt("w006_upper", vt / b, (th + eps) / (1.0 + r.beta));

    add_le("alpha_bound", al, (n - 1.0) * (n - 1.0) * eps * eps / (2.0 * n * (n + 2.0)));
    add_le("j_at_least_2n", 2.0 * n, J);
    for (int k : {n + 1, n + 2})
        add_le("jk_bound_k" + std::to_string(k), (J * k + 2.0 * n) / (2.0 * J), (k + 1.0) / 2.0);

    // cubic controlling delta_{m+1}^{1/2} <= Lambda^{-1}
    {
        const double c3 = -(n - 1.0) * (n - 1.0);
        const double c2 = -(9.0 * n - 11.0) / (5.0 * (n + 1.0));
        const double c1 = (3.0 * n + 1.0) / (n + 1.0);
        const double c0 = -2.0 / (n + 1.0);
        add_le("half_delta_cubic", ((c3 * eps + c2) * eps + c1) * eps + c0, 0.0);
    }
    add_lt("eps_below_2_over_3n_plus_1", eps, 2.0 / (3.0 * n + 1.0));
    add_lt("vartheta_positive", 0.0, vt);
    add_lt("tau_positive", 0.0, r.tau);
    return r;
}

int stage_index_threshold(const stage::GlobalParams& gp) {
    const double gap = gp.vartheta / gp.b - gp.theta;
    require(gap > 0.0, Error::Code::Numeric,
            "stage_index_threshold: degenerate exponents, vartheta <= b theta");
    const double value =
        std::log(gp.tau * gp.theta / (gp.b * (gp.vartheta - gp.b * gp.theta))) / std::log(gp.b);
    return static_cast<int>(std::floor(value)) + 1;
}

int stage_index_threshold_scan(const stage::GlobalParams& gp, int max_m) {
    const double gap = gp.vartheta / gp.b - gp.theta;
    require(gap > 0.0, Error::Code::Numeric, "stage_index_threshold_scan: degenerate exponents");
    for (int m = 0; m <= max_m; ++m)
        if (gp.tau * gp.theta - std::pow(gp.b, m + 2) * gap < 0.0) return m;
    throw NumericError("stage_index_threshold_scan: no sign change within the scan budget");
}

DecayFit fit_decay(const std::vector<double>& deficits) {
    DecayFit fit;
    for (std::size_t i = 0; i + 1 < deficits.size(); ++i) {
        fit.stage_factors.push_back(deficits[i + 1] / deficits[i]);
        if (deficits[i + 1] >= deficits[i]) fit.monotone = false;
    }
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < deficits.size(); ++i) {
        const double d = deficits[i];
        if (d > 0.0 && d < 1.0) {
            xs.push_back(static_cast<double>(i));
            ys.push_back(std::log(std::log(1.0 / d)));
        }
    }
    fit.sufficient = xs.size() >= 3;
    if (!fit.sufficient) return fit;

    const double count = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double denom = count * sxx - sx * sx;
    fit.slope = (count * sxy - sx * sy) / denom;
    const double num = count * sxy - sx * sy;
    const double den = std::sqrt(denom * (count * syy - sy * sy));
    fit.quality = den > 0 ? (num / den) * (num / den) : 1.0;
    return fit;
}

void write_report_records(const AuditReport& report, std::ostream& out) {
    for (const Check& c : report.checks) {
        nlohmann::ordered_json j;
        j["id"] = c.id;
        j["lhs"] = c.lhs;
        j["rhs"] = c.rhs;
        j["margin"] = c.margin();
        j["pass"] = c.pass;
        out << j.dump() << '\n';
    }
}

std::string format_report_table(const AuditReport& report) {
    std::ostringstream out;
    out << "exponent audit: n=" << report.n << " eps=" << report.eps << " N_star=" << report.N_star
        << "\n";
    out << "  theta=" << report.theta << " b=" << report.b << " vartheta=" << report.vartheta
        << " tau=" << report.tau << " alpha=" << report.alpha << " J=" << report.J
        << " beta=" << report.beta << "\n";
    out << std::left << std::setw(30) << "  check" << std::setw(17) << "lhs" << std::setw(17)
        << "rhs" << std::setw(15) << "margin"
        << "status\n";
    for (const Check& c : report.checks) {
        out << "  " << std::left << std::setw(28) << c.id << std::setw(17) << std::setprecision(9)
            << c.lhs << std::setw(17) << c.rhs << std::setw(15) << c.margin()
            << (c.pass ? "pass" : "FAIL") << "\n";
    }
    return out.str();
}

}  // namespace cforge::audit
