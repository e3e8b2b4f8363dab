#pragma once

#include <vector>

#include "cforge/fieldlab.hpp"
#include "cforge/profiles.hpp"
#include "cforge/symcore.hpp"

namespace cforge::decomp {

/// h = sum a_i^2 xi_i (x) xi_i + sum_{i<=n} mu_i^{-2} grad a_i (x) grad a_i + E
struct KallenDecomposition {
    int depth = 0;
    std::vector<fieldlab::ScalarField> amplitudes;  // n_star fields
    fieldlab::MetricField residual;                 // E
    std::vector<double> mu;                         // mu_0..mu_n
    double hypothesis_value = 0.0;                  // ||h-h_*||_0 + mu_0/mu_1
    bool hypothesis_strict = true;                  // within 2 sigma_0
    std::vector<std::string> warnings;
};

/// Fixed-point amplitude extraction (depth+1 sweeps in total, starting from
/// a_i = sqrt(L_i(h))). The 2 sigma_0 smallness hypothesis is enforced up to
/// `hypothesis_tol_factor`; the square-root floor sigma_star/4 is always
/// enforced.
KallenDecomposition kallen_decompose(const symcore::PrimitiveBasis& basis,
                                     const fieldlab::MetricField& h,
                                     const std::vector<double>& mu, int depth,
                                     double hypothesis_tol_factor = 1.0);

/// Residual of the Kallen reconstruction identity, as a field.
fieldlab::MetricField kallen_identity_residual(const symcore::PrimitiveBasis& basis,
                                               const fieldlab::MetricField& h,
                                               const KallenDecomposition& kd);

/// gamma(lambda x.xi_i) Q = 2 sym(grad w) + gamma_out(lambda x.xi_i) (mu/lambda)^j G + R
struct OscillatoryReduction {
    fieldlab::VectorField w;   // R^n corrector
    fieldlab::MetricField G;   // carried coefficient
    fieldlab::MetricField R;   // span{xi_k (x) xi_k : k > n} component
    profiles::PeriodicProfile gamma_out;
    int depth = 0;
    double lambda = 0.0;
    double mu = 0.0;
    int direction = 0;  // 1..n
};

/// Iterative integration by parts: `depth` rounds of splitting Q through
/// Phi_i (c_star = 1), absorbing the xi_i-sym part into grad w via the
/// profile primitive and recursing on the derivative remainder. lambda must
/// be torus-commensurate along xi_i (snap_frequency) and below the grid
/// guard.
OscillatoryReduction oscillatory_reduce(const symcore::PrimitiveBasis& basis,
                                        const fieldlab::MetricField& Q,
                                        const profiles::PeriodicProfile& gamma, int i,
                                        double lambda, double mu, double K, int depth);

/// Pointwise residual of the reduction identity.
fieldlab::MetricField oscillatory_identity_residual(const symcore::PrimitiveBasis& basis,
                                                    const fieldlab::MetricField& Q,
                                                    const profiles::PeriodicProfile& gamma,
                                                    const OscillatoryReduction& red);

/// The gamma_out (mu/lambda)^j G term of the identity, as a field.
fieldlab::MetricField oscillatory_gamma_term(const symcore::PrimitiveBasis& basis,
                                             const OscillatoryReduction& red);

/// Implicit-function decomposition for even n:
/// h = sum a_i^2 xi_i xi_i + sum mu_i^{-2} grad a_i grad a_i
///     + sum_k b_k G_k + sum_{kl} b_k b_l Theta_kl + E,  b_k = sqrt(a_{nbar+k}^2 - T_k).
struct NewtonDecomposition {
    int depth = 0;
    std::vector<fieldlab::ScalarField> amplitudes;
    fieldlab::MetricField residual;
    std::vector<double> mu;
    int newton_iterations = 0;  // max over grid points
    bool ite01_ok = true;       // (mu_0/mu_1)^2 >= mu_{n2}/mu_{n2+1}, reported
    double hypothesis_value = 0.0;
    std::vector<std::string> warnings;
};

/// T_k enter only under the square roots and are scalar fields; G_k and
/// Theta_kl are symmetric matrix fields. Newton runs once per grid point at
/// sweep zero; later sweeps are plain basis resolves absorbing the gradient
/// corrections. mu has n_star + 1 entries.
NewtonDecomposition newton_decompose(const symcore::PrimitiveBasis& basis,
                                     const fieldlab::MetricField& h,
                                     const std::vector<fieldlab::ScalarField>& T,
                                     const std::vector<fieldlab::MetricField>& G,
                                     const std::vector<fieldlab::MetricField>& Theta,
                                     const std::vector<double>& mu, int depth, int n1 = -1,
                                     int n2 = -1, double hypothesis_tol_factor = 1.0);

fieldlab::MetricField newton_identity_residual(const symcore::PrimitiveBasis& basis,
                                               const fieldlab::MetricField& h,
                                               const std::vector<fieldlab::ScalarField>& T,
                                               const std::vector<fieldlab::MetricField>& G,
                                               const std::vector<fieldlab::MetricField>& Theta,
                                               const NewtonDecomposition& nd, int n1 = -1);

// --------------------------------------------------------------------------
// Shared helpers
// --------------------------------------------------------------------------

/// sym(grad w) for an R^n-valued field over its own domain.
fieldlab::MetricField sym_gradient(const fieldlab::VectorField& w,
                                   fieldlab::DiffScheme scheme = fieldlab::DiffScheme::Spectral);

/// Samples gamma(lambda x . xi) over the grid.
fieldlab::ScalarField profile_on_phase(const profiles::PeriodicProfile& gamma,
                                       const fieldlab::GridDomain& dom, double lambda,
                                       const Eigen::VectorXd& xi);

/// Fast pointwise projection onto the basis coefficients (L_i applied to a
/// whole field); column i of the result is the coefficient field of xi_i xi_i.
std::vector<fieldlab::ScalarField> project_L_field(const symcore::PrimitiveBasis& basis,
                                                   const fieldlab::MetricField& h);

}  // namespace cforge::decomp
