#include "cforge/symcore.hpp"

#include <cmath>
#include <random>

namespace cforge::symcore {

namespace {

/// Packed vectorization of a symmetric matrix (upper triangle, row-major).
Eigen::VectorXd pack_sym(const Eigen::MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    Eigen::VectorXd v(n * (n + 1) / 2);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) v(k++) = m(i, j);
    return v;
}

Eigen::MatrixXd random_unit_sym(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd p(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = gauss(rng);
            p(i, j) = v;
            p(j, i) = v;
        }
    const double nrm = p.norm();
    if (nrm > 0) p /= nrm;
    return p;
}

}  // namespace

int PrimitiveBasis::packed_index(int n, int i, int j) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i - 1) / 2 + (j - i);
}

Eigen::MatrixXd sym_outer(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return 0.5 * (a * b.transpose() + b * a.transpose());
}

PrimitiveBasis build_basis(int n) {
    require_pre(n >= 2, "build_basis: dimension must be >= 2");
    PrimitiveBasis basis;
    basis.n = n;
    basis.n_star = n * (n + 1) / 2;

    basis.xi.reserve(basis.n_star);
    for (int i = 0; i < n; ++i) basis.xi.push_back(Eigen::VectorXd::Unit(n, i));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
            v(i) = 1.0;
            v(j) = 1.0;
            basis.xi.push_back(v / v.norm());
        }

    basis.basis_mats.reserve(basis.n_star);
    basis.h_star = Eigen::MatrixXd::Zero(n, n);
    for (const auto& xi : basis.xi) {
        basis.basis_mats.push_back(xi * xi.transpose());
        basis.h_star += basis.basis_mats.back();
    }

    basis.gram.resize(basis.n_star, basis.n_star);
    for (int i = 0; i < basis.n_star; ++i)
        for (int j = 0; j < basis.n_star; ++j)
            basis.gram(i, j) = (basis.basis_mats[i].array() * basis.basis_mats[j].array()).sum();
    basis.gram_lu = Eigen::PartialPivLU<Eigen::MatrixXd>(basis.gram);

    // Phi_i matrices with c_star = 1, acting on packed symmetric coordinates.
    basis.phi_lu.reserve(n);
    basis.phi_condition.reserve(n);
    for (int dir = 0; dir < n; ++dir) {
        Eigen::MatrixXd phi(basis.n_star, basis.n_star);
        for (int k = 0; k < n; ++k)
            phi.col(k) = pack_sym(sym_outer(Eigen::VectorXd::Unit(n, k), basis.xi[dir]));
        for (int j = n; j < basis.n_star; ++j)
            phi.col(j) = pack_sym(basis.basis_mats[j]);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi);
        const double smin = svd.singularValues().minCoeff();
        basis.phi_condition.push_back(smin > 0 ? svd.singularValues().maxCoeff() / smin
                                               : std::numeric_limits<double>::infinity());
        basis.phi_lu.emplace_back(phi);
    }

    basis.sigma_star = estimate_sigma_star(basis, 4096);
    basis.sigma_0 = std::sqrt(basis.sigma_star) / 2.0;
    return basis;
}

Eigen::VectorXd project_L(const PrimitiveBasis& basis, const SymMatrix& h) {
    require_pre(h.n() == basis.n, "project_L: dimension mismatch");
    Eigen::VectorXd rhs(basis.n_star);
    for (int i = 0; i < basis.n_star; ++i)
        rhs(i) = (basis.basis_mats[i].array() * h.mat().array()).sum();
    return basis.gram_lu.solve(rhs);
}

SymMatrix assemble(const PrimitiveBasis& basis, const Eigen::VectorXd& coeffs) {
    require_pre(coeffs.size() == basis.n_star, "assemble: coefficient count mismatch");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(basis.n, basis.n);
    for (int i = 0; i < basis.n_star; ++i) m += coeffs(i) * basis.basis_mats[i];
    return SymMatrix(m);
}

double estimate_sigma_star(const PrimitiveBasis& basis, int samples, std::uint64_t seed) {
    require_pre(samples >= 1000, "estimate_sigma_star: need at least 10^3 samples");

    // Fixed perturbation set, reused across the bisection so the predicate is
    // monotone in sigma. Directions on the Frobenius sphere, radii in [0,1].
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Eigen::MatrixXd> dirs;
    std::vector<double> radii;
    dirs.reserve(samples);
    radii.reserve(samples);
    for (int s = 0; s < samples; ++s) {
        dirs.push_back(random_unit_sym(basis.n, rng));
        radii.push_back(unif(rng));
    }

    auto admissible = [&](double sigma) {
        for (int s = 0; s < samples; ++s) {
            SymMatrix h(Eigen::MatrixXd(basis.h_star + (2.0 * sigma * radii[s]) * dirs[s]));
            const Eigen::VectorXd c = project_L(basis, h);
            if (c.minCoeff() < sigma) return false;
        }
        return true;
    };

    double lo = 0.0, hi = 1.0;
    if (!admissible(hi)) {
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (admissible(mid) ? lo : hi) = mid;
        }
    } else {
        lo = hi;
    }
    return 0.5 * lo;  // safety factor
}

double exact_sigma_star(const PrimitiveBasis& basis) {
    // L_i(h) = <Q_i, h>_F with Q_i = sum_j (G^{-1})_{ij} B_j. The worst-case
    // decrease of min_i L_i over the ball |h - h_star|_F <= 2 sigma is
    // 2 sigma max_i |Q_i|_F, and L_i(h_star) = 1.
    const Eigen::MatrixXd gram_inv = basis.gram_lu.solve(
        Eigen::MatrixXd::Identity(basis.n_star, basis.n_star));
    double worst = 0.0;
    for (int i = 0; i < basis.n_star; ++i) {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(basis.n, basis.n);
        for (int j = 0; j < basis.n_star; ++j) q += gram_inv(i, j) * basis.basis_mats[j];
        worst = std::max(worst, q.norm());
    }
    return 1.0 / (1.0 + 2.0 * worst);
}

PhiSolution solve_phi(const PrimitiveBasis& basis, int i, double c_star, const SymMatrix& M) {
    require_pre(i >= 1 && i <= basis.n, "solve_phi: direction index out of range");
    require(c_star != 0.0, Error::Code::Numeric, "solve_phi: singular map, c_star = 0");
    require_pre(M.n() == basis.n, "solve_phi: dimension mismatch");

    Eigen::VectorXd rhs(basis.n_star);
    {
        int k = 0;
        for (int r = 0; r < basis.n; ++r)
            for (int c = r; c < basis.n; ++c) rhs(k++) = M(r, c);
    }
    Eigen::VectorXd sol = basis.phi_lu[i - 1].solve(rhs);
    PhiSolution out;
    out.alpha = sol.head(basis.n) / c_star;
    out.beta = sol.tail(basis.n_star - basis.n);
    return out;
}

SymMatrix apply_phi(const PrimitiveBasis& basis, int i, double c_star,
                    const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
    require_pre(i >= 1 && i <= basis.n, "apply_phi: direction index out of range");
    Eigen::MatrixXd m = c_star * sym_outer(alpha, basis.xi[i - 1]);
    for (int j = basis.n; j < basis.n_star; ++j) m += beta(j - basis.n) * basis.basis_mats[j];
    return SymMatrix(m);
}

}  // namespace cforge::symcore
