#pragma once

// Fiberwise analysis at the boundary: the companion matrix of the frozen
// normal ODE, the subbundles L+/L- of initial data of bounded solutions,
// the boundary symbol sigma(B)|_{L+}, Shapiro-Lopatinskii ellipticity
// reports and the Atiyah-Bott obstruction on circle boundaries.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bvp/matrix_util.hpp"
#include "bvp/operators.hpp"

namespace bvp {

enum class SubspaceSide { Plus, Minus };

/// Orthonormal basis of a fiber of L+ or L- inside the jet space C^(m*n).
struct SubspaceFrame {
    double x = 0.0;
    double xi = 0.0;
    SubspaceSide side = SubspaceSide::Plus;
    Matrix columns;  // (m*n) x rank, orthonormal

    int rank() const { return static_cast<int>(columns.cols()); }
};

/// Companion linearization of det(sum_k A_k lam^(m-k)) = 0 in the jet
/// coordinates (u, -iu', ..., (-i)^(m-1) u^(m-1)) at t = 0.
inline Matrix companion_matrix(const CollarOperator& op, double x, double xi) {
    const int m = op.order();
    const int n = op.rank();
    std::vector<Matrix> a = op.freeze(x, 0.0, xi);
    if ((a[0] - Matrix::Identity(n, n)).norm() > 1e-12)
        throw NormalizationError("companion matrix requires a leading identity coefficient");
    Matrix c = Matrix::Zero(m * n, m * n);
    for (int j = 0; j + 1 < m; ++j)
        c.block(j * n, (j + 1) * n, n, n) = Matrix::Identity(n, n);
    for (int k = 1; k <= m; ++k)
        c.block((m - 1) * n, (m - k) * n, n, n) = -a[k];
    return c;
}

/// Invariant subspaces of the companion matrix: L+ spans the initial data of
/// solutions bounded as t -> +inf (roots with Im lam > 0), L- the rest.
inline std::pair<SubspaceFrame, SubspaceFrame> bounded_subspaces(const Matrix& companion,
                                                                 double tol = 1e-8,
                                                                 double x = 0.0,
                                                                 double xi = 0.0) {
    for (Complex ev : eigenvalues_of(companion)) {
        if (std::abs(ev.imag()) < tol)
            throw EllipticityMarginError("ODE root too close to the real axis", ev);
    }
    auto plus_sel = [](Complex z) { return z.imag() > 0.0; };
    Matrix vplus = invariant_subspace(companion, plus_sel);
    Matrix vminus = invariant_subspace(companion, [&](Complex z) { return !plus_sel(z); });
    SubspaceFrame fp{x, xi, SubspaceSide::Plus, canonical_frame(vplus)};
    SubspaceFrame fm{x, xi, SubspaceSide::Minus, canonical_frame(vminus)};
    return {fp, fm};
}

/// sigma(B) applied to the frame columns: shape rank(G) x rank(L+).
inline Matrix boundary_symbol_matrix(const BoundaryCondition& b, const SubspaceFrame& frame) {
    if (frame.side != SubspaceSide::Plus)
        throw ShapeError("boundary symbol is evaluated on the plus frame");
    Matrix row = b.jet_row(frame.x, frame.xi);
    if (row.cols() != frame.columns.rows())
        throw ShapeError("jet dimension mismatch between condition and frame");
    return row * frame.columns;
}

struct SlSample {
    int component = 0;
    double x = 0.0;
    double xi = 0.0;
    double min_singular_value = 0.0;
    int rank_plus = 0;
    int rank_target = 0;
    std::vector<Complex> roots;
};

/// Shapiro-Lopatinskii ellipticity report.
struct EllipticityReport {
    std::vector<SlSample> samples;
    double global_min = 0.0;
    bool rank_mismatch = false;
    bool elliptic = false;
    std::string grid;
    std::string detail;
};

namespace detail {

inline std::vector<double> boundary_x_samples(const ModelManifold& m, int nx) {
    std::vector<double> xs;
    if (m.component_kind() == BoundaryComponentKind::PointPair) {
        xs.push_back(0.0);
        return xs;
    }
    xs.reserve(nx);
    for (int k = 0; k < nx; ++k) xs.push_back(2.0 * M_PI * k / nx);
    return xs;
}

}  // namespace detail

/// Check the boundary symbol over a sample grid.  For spectral components the
/// target is Im sigma(P) and the isomorphism checked is
/// sigma(B): L+ -> Im sigma(P).
inline EllipticityReport sl_check(const BvpProblem& problem, const SampleGrid& grid = {},
                                  const Tolerances& tol = {}) {
    EllipticityReport rep;
    rep.grid = grid.describe();
    rep.global_min = std::numeric_limits<double>::infinity();
    for (int c = 0; c < problem.components(); ++c) {
        CollarOperator op = problem.component_operator(c);
        const BoundaryCondition& cond = problem.condition(c);
        for (double x : detail::boundary_x_samples(problem.manifold, grid.nx)) {
            for (double xi : problem.manifold.cosphere_directions()) {
                SlSample s;
                s.component = c;
                s.x = x;
                s.xi = xi;
                Matrix comp = companion_matrix(op, x, xi);
                s.roots = eigenvalues_of(comp);
                auto [fp, fm] = bounded_subspaces(comp, tol.root, x, xi);
                s.rank_plus = fp.rank();
                Matrix bsym;
                if (problem.is_spectral(c)) {
                    Matrix p = problem.projections[c]->symbol.eval(x, 0.0, xi, 0.0);
                    Matrix ptarget = canonical_frame(invariant_subspace(
                        p, [](Complex z) { return std::abs(z - 1.0) < 0.5; }));
                    s.rank_target = static_cast<int>(ptarget.cols());
                    bsym = ptarget.adjoint() * boundary_symbol_matrix(cond, fp);
                } else {
                    s.rank_target = cond.target_rank;
                    bsym = boundary_symbol_matrix(cond, fp);
                }
                if (s.rank_target == 0 && s.rank_plus == 0) {
                    // no data to match: trivially an isomorphism
                    s.min_singular_value = std::numeric_limits<double>::infinity();
                } else if (s.rank_target != s.rank_plus) {
                    rep.rank_mismatch = true;
                    s.min_singular_value = 0.0;
                    rep.detail = "rank(L+) = " + std::to_string(s.rank_plus) +
                                 " but target rank = " + std::to_string(s.rank_target) +
                                 " at component " + std::to_string(c);
                } else {
                    s.min_singular_value = min_singular_value(bsym);
                }
                rep.global_min = std::min(rep.global_min, s.min_singular_value);
                rep.samples.push_back(std::move(s));
            }
        }
    }
    rep.elliptic = !rep.rank_mismatch && rep.global_min > tol.sl;
    return rep;
}

/// Atiyah-Bott obstruction on a circle boundary component: ranks of L+ over
/// the two components of the cosphere bundle and their difference.
struct ObstructionReport {
    int rank_plus_dir = 0;   // rank of L+ over xi = +1
    int rank_minus_dir = 0;  // rank of L+ over xi = -1
    int obstruction = 0;
    double max_frame_jump = 0.0;  // principal-angle continuity along x
    bool obstructed = false;
    std::string verdict;
};

inline ObstructionReport ab_obstruction(const CollarOperator& op, const SampleGrid& grid = {},
                                        const Tolerances& tol = {}) {
    ObstructionReport rep;
    for (double xi : {1.0, -1.0}) {
        int rank = -1;
        Matrix prev;
        double max_jump = 0.0;
        for (int k = 0; k <= grid.nx; ++k) {
            const double x = 2.0 * M_PI * k / grid.nx;
            auto [fp, fm] = bounded_subspaces(companion_matrix(op, x, xi), tol.root, x, xi);
            if (rank < 0)
                rank = fp.rank();
            else if (rank != fp.rank())
                throw Error("rank of L+ jumps along the boundary at x = " + std::to_string(x) +
                            ", xi = " + std::to_string(xi) + " (broken ellipticity)");
            if (prev.size() > 0)
                max_jump = std::max(max_jump, max_principal_angle(prev, fp.columns));
            prev = fp.columns;
        }
        if (xi > 0)
            rep.rank_plus_dir = rank;
        else
            rep.rank_minus_dir = rank;
        rep.max_frame_jump = std::max(rep.max_frame_jump, max_jump);
    }
    rep.obstruction = rep.rank_plus_dir - rep.rank_minus_dir;
    rep.obstructed = rep.obstruction != 0;
    rep.verdict = rep.obstructed ? "Atiyah-Bott obstructed"
                                 : "classical boundary conditions possible";
    return rep;
}

}  // namespace bvp
