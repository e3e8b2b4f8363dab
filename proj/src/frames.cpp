#include "cforge/frames.hpp"

#include <algorithm>
#include <cmath>

namespace cforge::frames {

using fieldlab::ImmersionField;
using fieldlab::VectorField;

namespace {

constexpr double kPivotTol = 1e-8;

/// Projects e_k onto the normal space of J and appends it to the accepted
/// set if the orthogonalized remainder is substantial.
bool try_candidate(int k, const Eigen::MatrixXd& J, const Eigen::LDLT<Eigen::MatrixXd>& metric,
                   std::vector<Eigen::VectorXd>& accepted, int want) {
    const int d = static_cast<int>(J.rows());
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, k);
    // remove the tangential part
    v -= J * metric.solve(J.row(k).transpose());
    // remove previously accepted normals (two passes for orthogonality)
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : accepted) v -= q.dot(v) * q;
    const double nrm = v.norm();
    if (nrm < kPivotTol) return false;
    accepted.push_back(v / nrm);
    return static_cast<int>(accepted.size()) == want;
}

}  // namespace

NormalFrame build_frame(const ImmersionField& u, double gamma_bound) {
    require_pre(u.has_gradient(), "build_frame: gradient cache not populated");
    require_pre(gamma_bound > 1.0, "build_frame: gamma bound must exceed 1");
    const auto& dom = u.domain();
    const int n = dom.n;
    const int d = u.d();
    const int count = d - n;
    require_pre(count >= 1, "build_frame: no normal directions available");

    NormalFrame frame;
    frame.vectors.assign(count, VectorField(dom, d));

    // default candidate order: the trailing ambient directions first
    std::vector<int> default_order;
    for (int k = n; k < d; ++k) default_order.push_back(k);
    for (int k = 0; k < n; ++k) default_order.push_back(k);

    std::vector<int> prev_accepted;  // indices of the previous point's pivots
    std::vector<Eigen::VectorXd> accepted;
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        const Eigen::MatrixXd J = u.jacobian(p);
        const Eigen::MatrixXd M = J.transpose() * J;
        {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
            const double lo = es.eigenvalues().minCoeff();
            const double hi = es.eigenvalues().maxCoeff();
            if (lo < 1.0 / gamma_bound || hi > gamma_bound)
                throw PreconditionError(
                    "build_frame: degenerate immersion, pullback eigenvalue outside bounds at point " +
                    std::to_string(p));
        }
        const Eigen::LDLT<Eigen::MatrixXd> metric(M);

        accepted.clear();
        std::vector<int> used;
        bool done = false;
        // frame-continuation rule: previous pivots first, then the defaults
        for (int k : prev_accepted) {
            if (try_candidate(k, J, metric, accepted, count)) {
                used.push_back(k);
                done = true;
                break;
            }
            if (static_cast<int>(accepted.size()) > static_cast<int>(used.size())) used.push_back(k);
        }
        if (!done)
            for (int k : default_order) {
                if (std::find(used.begin(), used.end(), k) != used.end()) continue;
                const std::size_t before = accepted.size();
                if (try_candidate(k, J, metric, accepted, count)) {
                    used.push_back(k);
                    done = true;
                    break;
                }
                if (accepted.size() > before) used.push_back(k);
            }
        require(done, Error::Code::Numeric,
                "build_frame: could not complete a normal frame at point " + std::to_string(p));
        prev_accepted = used;
        for (int i = 0; i < count; ++i) {
            double* dst = frame.vectors[i].at(p);
            for (int r = 0; r < d; ++r) dst[r] = accepted[i](r);
        }
    }
    return frame;
}

double frame_gradient_sup(const NormalFrame& frame) {
    double worst = 0.0;
    for (const auto& eta : frame.vectors) {
        const int n = eta.domain().n;
        for (int a = 0; a < n; ++a) worst = std::max(worst, fieldlab::sup_norm(differentiate(eta, a)));
    }
    return worst;
}

VectorField tangential_correction(const ImmersionField& u) {
    require_pre(u.has_gradient(), "tangential_correction: gradient cache not populated");
    const auto& dom = u.domain();
    const int n = dom.n;
    const int d = u.d();
    VectorField F(dom, d * n);
    const std::size_t np = dom.point_count();
    for (std::size_t p = 0; p < np; ++p) {
        const Eigen::MatrixXd J = u.jacobian(p);
        const Eigen::MatrixXd M = J.transpose() * J;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
        if (!lu.isInvertible())
            throw PreconditionError("tangential_correction: degenerate immersion at point " +
                                    std::to_string(p));
        const Eigen::MatrixXd Fp = J * lu.inverse();
        double* dst = F.at(p);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < d; ++r) dst[c * d + r] = Fp(r, c);
    }
    return F;
}

Eigen::VectorXd apply_matrix_field(const VectorField& F, int d, int n, std::size_t p,
                                   const Eigen::VectorXd& w) {
    Eigen::Map<const Eigen::MatrixXd> Fp(F.at(p), d, n);
    return Fp * w;
}

}  // namespace cforge::frames
