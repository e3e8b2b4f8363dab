#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cforge/audit.hpp"

using namespace cforge;
using namespace cforge::audit;

namespace {

/// Independently expanded transcriptions of the inequality sides, written in
/// a different algebraic arrangement than the implementation.
struct HandExpanded {
    double z_a_lhs, z_a_rhs, z_b_lhs, z_b_rhs;
};

HandExpanded expand_by_hand(int n, double eps, int N_star) {
    (void)N_star;
    const double theta = (n % 2 == 1) ? (1.0 - n * eps) / n : (1.0 - (n + 1) * eps) / (n + 1);
    const double b = (2.0 + eps * n - eps) / 2.0;
    const double vt = b * (theta + eps) * (1.0 - n * eps + eps);
    const double al = 0.1 * eps * eps;
    const double J = std::floor(4.0 / (n * eps - eps)) + 3.0;
    HandExpanded h{};
    if (n % 2 == 1) {
        // lhs = 1 - vt/b + (2 vt (b-1) + b al) (J(n-1) + 2n) / (2J), expanded
        const double factor = (J * n - J + 2.0 * n) / (2.0 * J);
        h.z_a_lhs = 1.0 - vt / b + 2.0 * vt * b * factor - 2.0 * vt * factor + b * al * factor;
        h.z_a_rhs = b - vt;
        const double f2 = (J * n + J + 2.0 * n) / (2.0 * J);
        h.z_b_lhs = al * f2;
        h.z_b_rhs = (b * b - b) * (1.0 - vt * n - 2.0 * vt * n / J + vt - vt / b);
    } else {
        const double factor = n * (J + 2.0) / (2.0 * J);
        h.z_a_lhs = 1.0 - vt / b + 2.0 * vt * b * factor - 2.0 * vt * factor + b * al * factor;
        h.z_a_rhs = b - vt;
        const double f2 = (J * n + 2.0 * J + 2.0 * n) / (2.0 * J);
        h.z_b_lhs = al * f2;
        h.z_b_rhs = (b * b - b) * (1.0 - vt * n - vt - 2.0 * vt * n / J + vt - vt / b);
    }
    return h;
}

}  // namespace

TEST_CASE("transcription fidelity against a hand-expanded dual") {
    for (int n : {3, 4, 5, 6}) {
        for (double eps : {0.003, 0.01, 0.02}) {
            if (eps >= 2.0 / (n * n)) continue;
            const AuditReport r = audit_exponents(n, eps, n * (n + 1) / 2);
            const HandExpanded h = expand_by_hand(n, eps, n * (n + 1) / 2);
            const Check* za = r.find(n % 2 ? "z08a" : "z18a");
            const Check* zb = r.find(n % 2 ? "z08b" : "z18b");
            REQUIRE(za != nullptr);
            REQUIRE(zb != nullptr);
            CHECK(za->lhs == doctest::Approx(h.z_a_lhs).epsilon(1e-12));
            CHECK(za->rhs == doctest::Approx(h.z_a_rhs).epsilon(1e-12));
            CHECK(zb->lhs == doctest::Approx(h.z_b_lhs).epsilon(1e-12));
            CHECK(zb->rhs == doctest::Approx(h.z_b_rhs).epsilon(1e-12));
        }
    }
}

TEST_CASE("audit grid passes with positive margins") {
    for (int n : {3, 4, 5, 6}) {
        for (double eps : {0.001, 0.005, 0.01, 0.02}) {
            if (eps >= 2.0 / (n * n)) continue;
            const AuditReport r = audit_exponents(n, eps, n * (n + 1) / 2);
            for (const Check& c : r.checks) {
                INFO("n=", n, " eps=", eps, " check=", c.id);
                CHECK(c.pass);
            }
        }
    }
}

TEST_CASE("quoted cases and the binding constraint near the eps ceiling") {
    CHECK(audit_exponents(3, 0.02, 6).all_pass());
    CHECK(audit_exponents(4, 0.02, 10).all_pass());

    // as eps approaches 2/9 from below, some margin shrinks toward zero or flips
    double margin_far = 1e300, margin_near = 1e300;
    std::string binding;
    for (const Check& c : audit_exponents(3, 0.05, 6).checks) margin_far = std::min(margin_far, c.margin());
    for (const Check& c : audit_exponents(3, 0.22, 6).checks)
        if (c.margin() < margin_near) {
            margin_near = c.margin();
            binding = c.id;
        }
    MESSAGE("binding constraint near eps = 2/9: ", binding, " margin ", margin_near);
    CHECK(margin_near < margin_far);
    CHECK((margin_near < 0.01 || !audit_exponents(3, 0.22, 6).all_pass()));
}

TEST_CASE("theta monotonicity") {
    const double t1 = audit_exponents(3, 0.01, 6).theta;
    const double t2 = audit_exponents(3, 0.02, 6).theta;
    CHECK(t2 < t1);  // decreasing in eps
    const double t3 = audit_exponents(4, 0.01, 10).theta;
    CHECK(t3 < t1);  // odd n beats the next even n at equal eps
}

TEST_CASE("audit preconditions") {
    CHECK_THROWS_AS(audit_exponents(2, 0.01, 3), PreconditionError);
    CHECK_THROWS_AS(audit_exponents(3, 0.25, 6), PreconditionError);
}

TEST_CASE("stage index threshold: formula and scan agree") {
    for (double eps : {0.02, 0.05, 0.1}) {
        stage::GlobalParams gp = stage::make_global_params(3, eps, 0.1, 50.0);
        const int direct = stage_index_threshold(gp);
        const int scanned = stage_index_threshold_scan(gp);
        INFO("eps=", eps, " direct=", direct, " scan=", scanned);
        CHECK(direct == scanned);
        CHECK(gp.vartheta / gp.b - gp.theta > 0.0);
    }
}

TEST_CASE("stage index threshold for the quoted configuration") {
    stage::GlobalParams gp = stage::make_global_params(3, 0.02, 0.1, 50.0);
    const int m = stage_index_threshold(gp);
    CHECK(m == stage_index_threshold_scan(gp));
    CHECK(m > 0);
}

TEST_CASE("fit_decay recovers the schedule slope exactly on synthetic data") {
    const double b = 1.05, vartheta = 0.3, a = 40.0;
    std::vector<double> deficits;
    for (int m = 0; m < 6; ++m)
        deficits.push_back(std::pow(a, -2.0 * vartheta * std::pow(b, m)));  // delta_star = 1
    const DecayFit fit = fit_decay(deficits);
    CHECK(fit.sufficient);
    CHECK(fit.monotone);
    CHECK(fit.slope == doctest::Approx(std::log(b)).epsilon(1e-6));
    CHECK(fit.quality > 0.999999);
}

TEST_CASE("fit_decay flags insufficient data") {
    const DecayFit fit = fit_decay({0.5, 0.25});
    CHECK_FALSE(fit.sufficient);
    CHECK(fit.stage_factors.size() == 1);
}

TEST_CASE("fit_decay tolerates noise") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> noise(-0.1, 0.1);
    const double b = 1.08, vartheta = 0.3, a = 30.0;
    std::vector<double> deficits;
    for (int m = 0; m < 8; ++m)
        deficits.push_back(std::pow(a, -2.0 * vartheta * std::pow(b, m)) * (1.0 + noise(rng)));
    const DecayFit fit = fit_decay(deficits);
    CHECK(fit.sufficient);
    CHECK(std::abs(fit.slope - std::log(b)) / std::log(b) < 0.15);
}

TEST_CASE("report emission") {
    const AuditReport r = audit_exponents(3, 0.02, 6);
    std::ostringstream ss;
    write_report_records(r, ss);
    CHECK(ss.str().find("z08a") != std::string::npos);
    const std::string table = format_report_table(r);
    CHECK(table.find("pass") != std::string::npos);
    CHECK(table.find("FAIL") == std::string::npos);
}
