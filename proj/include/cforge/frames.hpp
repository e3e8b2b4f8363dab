#pragma once

#include <vector>

#include "cforge/fieldlab.hpp"

namespace cforge::frames {

/// Orthonormal normal fields eta_1..eta_{d-n} along an immersion:
/// eta_i . eta_j = delta_ij and (nabla u)^T eta_i = 0 at every grid point.
struct NormalFrame {
    std::vector<fieldlab::VectorField> vectors;
    int count() const { return static_cast<int>(vectors.size()); }
};

/// Builds the frame by projecting the ambient basis vectors onto the normal
/// space and orthonormalizing in a fixed candidate order (e_{n+1}..e_d first,
/// then e_1..e_n). When a pivot degenerates (projected norm < 1e-8) the
/// accepted order of the previous grid point is tried first, which keeps the
/// selection continuous across the grid.
NormalFrame build_frame(const fieldlab::ImmersionField& u, double gamma_bound = 16.0);

/// Max over points and frame members of |nabla eta_i| (spectral), the
/// smoothness proxy reported alongside the frame.
double frame_gradient_sup(const NormalFrame& frame);

/// Tangential correction F = nabla u (nabla u^T nabla u)^{-1}, a d x n matrix
/// field stored column-major per point (same layout as the Jacobian cache).
/// Satisfies (nabla u)^T F = Id pointwise.
fieldlab::VectorField tangential_correction(const fieldlab::ImmersionField& u);

/// F(p) * w for a matrix field in the tangential_correction layout.
Eigen::VectorXd apply_matrix_field(const fieldlab::VectorField& F, int d, int n, std::size_t p,
                                   const Eigen::VectorXd& w);

}  // namespace cforge::frames
