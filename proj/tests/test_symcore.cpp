#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cforge/symcore.hpp"

using namespace cforge;
using namespace cforge::symcore;

namespace {

Eigen::MatrixXd random_sym(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = unif(rng);
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

}  // namespace

TEST_CASE("basis directions and h_star for n=2") {
    const PrimitiveBasis b = build_basis(2);
    CHECK(b.n_star == 3);
    CHECK(b.xi[0].isApprox(Eigen::Vector2d(1, 0)));
    CHECK(b.xi[1].isApprox(Eigen::Vector2d(0, 1)));
    CHECK(b.xi[2].isApprox(Eigen::Vector2d(1, 1).normalized()));

    Eigen::Matrix2d expected;
    expected << 1.5, 0.5, 0.5, 1.5;
    CHECK((b.h_star - expected).norm() < 1e-14);
}

TEST_CASE("h_star entries for n=3") {
    const PrimitiveBasis b = build_basis(3);
    CHECK(b.n_star == 6);
    for (int i = 0; i < 3; ++i) CHECK(b.h_star(i, i) == doctest::Approx(2.0).epsilon(1e-14));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(b.h_star(i, j) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("invalid dimension") { CHECK_THROWS_AS(build_basis(1), PreconditionError); }

TEST_CASE("basis invariants: unit directions, nonsingular gram, SPD h_star") {
    for (int n : {2, 3, 4, 5, 6}) {
        const PrimitiveBasis b = build_basis(n);
        for (const auto& xi : b.xi) CHECK(std::abs(xi.norm() - 1.0) < 1e-12);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(b.gram);
        CHECK(lu.isInvertible());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.h_star);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        // closed form: eigenvalues n and n/2
        CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(double(n)).epsilon(1e-12));
    }
}

TEST_CASE("project_L on h_star gives all ones") {
    for (int n : {2, 3, 5}) {
        const PrimitiveBasis b = build_basis(n);
        const Eigen::VectorXd c = project_L(b, SymMatrix(b.h_star));
        for (int i = 0; i < b.n_star; ++i) CHECK(c(i) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("project_L on a basis element is a coordinate vector") {
    const PrimitiveBasis b = build_basis(3);
    const Eigen::VectorXd c = project_L(b, SymMatrix(b.basis_mats[0]));
    CHECK(c(0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 1; i < b.n_star; ++i) CHECK(std::abs(c(i)) < 1e-12);
}

TEST_CASE("project_L round-trip residual on random symmetric matrices") {
    std::mt19937_64 rng(42);
    for (int n : {2, 3, 4, 5, 6}) {
        const PrimitiveBasis b = build_basis(n);
        for (int trial = 0; trial < 200; ++trial) {
            const SymMatrix h(random_sym(n, rng));
            const Eigen::VectorXd c = project_L(b, h);
            const SymMatrix back = assemble(b, c);
            const double res = (back.mat() - h.mat()).norm();
            CHECK(res <= 1e-11 * (1.0 + h.frobenius()));
        }
    }
}

TEST_CASE("project_L linearity") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    const PrimitiveBasis b = build_basis(4);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = unif(rng), c = unif(rng);
        const Eigen::MatrixXd h1 = random_sym(4, rng), h2 = random_sym(4, rng);
        const Eigen::VectorXd lhs = project_L(b, SymMatrix(a * h1 + c * h2));
        const Eigen::VectorXd rhs = a * project_L(b, SymMatrix(h1)) + c * project_L(b, SymMatrix(h2));
        CHECK((lhs - rhs).norm() <= 1e-11 * (1.0 + lhs.norm()));
    }
}

TEST_CASE("sigma_star estimate is positive, deterministic and within the exact margin") {
    for (int n : {2, 3}) {
        const PrimitiveBasis b = build_basis(n);
        CHECK(b.sigma_star > 0.0);
        CHECK(b.sigma_star < 1.0);
        const double exact = exact_sigma_star(b);
        // sampling sees fewer constraints than the exact worst case, so the
        // pre-halving value is >= exact; halving restores safety.
        CHECK(b.sigma_star <= exact);
        CHECK(b.sigma_star >= 0.25 * exact);
        CHECK(estimate_sigma_star(b, 2048) == estimate_sigma_star(b, 2048));
        CHECK(b.sigma_0 == doctest::Approx(std::sqrt(b.sigma_star) / 2.0));
    }
}

TEST_CASE("sigma_star: sampled margin holds on 10^4 fresh draws") {
    const PrimitiveBasis b = build_basis(3);
    std::mt19937_64 rng(0xC0FFEE);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst = 1e300;
    for (int s = 0; s < 10000; ++s) {
        Eigen::MatrixXd p(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                const double v = gauss(rng);
                p(i, j) = v;
                p(j, i) = v;
            }
        p *= (2.0 * b.sigma_star * unif(rng)) / p.norm();
        const Eigen::VectorXd c = project_L(b, SymMatrix(Eigen::MatrixXd(b.h_star + p)));
        worst = std::min(worst, c.minCoeff());
    }
    CHECK(worst >= b.sigma_star);
}

TEST_CASE("sigma_star estimator rejects tiny sample counts") {
    const PrimitiveBasis b = build_basis(2);
    CHECK_THROWS_AS(estimate_sigma_star(b, 0), PreconditionError);
}

TEST_CASE("solve_phi: zero matrix maps to zero") {
    const PrimitiveBasis b = build_basis(3);
    const PhiSolution s = solve_phi(b, 1, 2.5, SymMatrix(3));
    CHECK(s.alpha.norm() < 1e-13);
    CHECK(s.beta.norm() < 1e-13);
}

TEST_CASE("solve_phi: direct image recovers alpha") {
    const PrimitiveBasis b = build_basis(3);
    Eigen::Vector3d v(0.3, -1.2, 0.8);
    const double c_star = 1.7;
    const SymMatrix m(Eigen::MatrixXd(c_star * sym_outer(v, b.xi[0])));
    const PhiSolution s = solve_phi(b, 1, c_star, m);
    CHECK((s.alpha - v).norm() < 1e-12);
    CHECK(s.beta.norm() < 1e-12);
}

TEST_CASE("solve_phi round-trip for all directions and dimensions") {
    std::mt19937_64 rng(99);
    for (int n : {2, 3, 4}) {
        const PrimitiveBasis b = build_basis(n);
        for (int i = 1; i <= n; ++i) {
            CHECK(std::isfinite(b.phi_condition[i - 1]));
            for (int trial = 0; trial < 50; ++trial) {
                const SymMatrix m(random_sym(n, rng));
                const PhiSolution s = solve_phi(b, i, 1.0, m);
                const SymMatrix back = apply_phi(b, i, 1.0, s.alpha, s.beta);
                CHECK((back.mat() - m.mat()).norm() <= 1e-11 * (1.0 + m.frobenius()));
            }
        }
    }
}

TEST_CASE("solve_phi with zero c_star fails") {
    const PrimitiveBasis b = build_basis(2);
    CHECK_THROWS_AS(solve_phi(b, 1, 0.0, SymMatrix(2)), NumericError);
}
