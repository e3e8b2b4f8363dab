#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cforge/common.hpp"

namespace cforge::symcore {

/// Symmetric n x n matrix. Entries are symmetrized on every write so the
/// stored representation is exactly symmetric.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(int n) : m_(Eigen::MatrixXd::Zero(n, n)) {}
    explicit SymMatrix(const Eigen::MatrixXd& m) { assign(m); }

    int n() const { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXd& mat() const { return m_; }

    void assign(const Eigen::MatrixXd& m) {
        require_pre(m.rows() == m.cols(), "SymMatrix: matrix must be square");
        m_ = 0.5 * (m + m.transpose());
    }

    double operator()(int i, int j) const { return m_(i, j); }
    void set(int i, int j, double v) { m_(i, j) = v; m_(j, i) = v; }

    double frobenius() const { return m_.norm(); }

private:
    Eigen::MatrixXd m_;
};

/// The fixed rank-one basis of Sym_n built from the axis directions and the
/// normalized pair sums, together with the positivity margin of the
/// coordinate maps L_i around the distinguished matrix h_star.
struct PrimitiveBasis {
    int n = 0;
    int n_star = 0;                      // n(n+1)/2
    std::vector<Eigen::VectorXd> xi;     // n_star unit directions
    Eigen::MatrixXd h_star;              // sum of xi_i (x) xi_i
    double sigma_star = 0.0;
    double sigma_0 = 0.0;                // sqrt(sigma_star)/2

    // Derived solver state, fixed per n.
    Eigen::MatrixXd gram;                         // <B_i, B_j>_F
    Eigen::PartialPivLU<Eigen::MatrixXd> gram_lu; // factorization of gram
    std::vector<Eigen::MatrixXd> basis_mats;      // B_i = xi_i (x) xi_i
    // Per direction i (1..n): LU of the Phi_i matrix with c_star = 1.
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> phi_lu;
    std::vector<double> phi_condition;            // estimated condition numbers

    /// Index of (i,j), i <= j, in the packed symmetric vectorization.
    static int packed_index(int n, int i, int j);
};

/// Builds the basis for dimension n >= 2. sigma_star comes from
/// estimate_sigma_star with the default sample count and a fixed seed;
/// sigma_0 = sqrt(sigma_star)/2.
PrimitiveBasis build_basis(int n);

/// Coordinates of h in the rank-one basis: h = sum c_i xi_i (x) xi_i.
Eigen::VectorXd project_L(const PrimitiveBasis& basis, const SymMatrix& h);

/// Reassemble sum c_i xi_i (x) xi_i.
SymMatrix assemble(const PrimitiveBasis& basis, const Eigen::VectorXd& coeffs);

/// Randomized lower estimate of the margin sigma such that L_i(h) >= sigma
/// whenever |h - h_star|_F <= 2 sigma. Bisection over sigma against `samples`
/// seeded random perturbations, then halved for safety. Deterministic for a
/// fixed seed.
double estimate_sigma_star(const PrimitiveBasis& basis, int samples, std::uint64_t seed = 0x5eed5a11u);

/// Exact value of the margin: 1 / (1 + 2 max_i |Q_i|_F) where L_i(h) = <Q_i, h>_F.
/// Used as an independent oracle for the randomized estimate.
double exact_sigma_star(const PrimitiveBasis& basis);

struct PhiSolution {
    Eigen::VectorXd alpha;  // R^n
    Eigen::VectorXd beta;   // R^{n_star - n}
};

/// Solves Phi_i(alpha, beta) = c_star * (alpha ⊙ xi_i) + sum_{j>n} beta_{j-n} xi_j (x) xi_j = M.
/// i is 1-based in 1..n. c_star must be nonzero.
PhiSolution solve_phi(const PrimitiveBasis& basis, int i, double c_star, const SymMatrix& M);

/// Applies Phi_i to (alpha, beta); inverse direction of solve_phi.
SymMatrix apply_phi(const PrimitiveBasis& basis, int i, double c_star,
                    const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta);

/// alpha ⊙ xi := (alpha (x) xi + xi (x) alpha) / 2.
Eigen::MatrixXd sym_outer(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace cforge::symcore
