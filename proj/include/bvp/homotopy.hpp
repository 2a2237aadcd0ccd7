#pragma once

// Certified deformations of boundary value problems: eigenvalue flattening,
// rotation of the boundary condition onto a projection, collar pullback of a
// boundary family, order reduction to first order, and the composite
// reduction to spectral form.  Every path is a continuous family of
// symbol-level problems with an ellipticity certificate sampled on a grid.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bvp/boundary.hpp"
#include "bvp/matrix_util.hpp"
#include "bvp/operators.hpp"

namespace bvp {

enum class PathKind { Flatten, Rotate, Collar, OrderReduce, ToSpectral };

inline std::string path_kind_name(PathKind k) {
    switch (k) {
        case PathKind::Flatten: return "flatten";
        case PathKind::Rotate: return "rotate";
        case PathKind::Collar: return "collar";
        case PathKind::OrderReduce: return "order-reduce";
        case PathKind::ToSpectral: return "to-spectral";
    }
    return "?";
}

struct HomotopyPath {
    PathKind kind = PathKind::Flatten;
    std::vector<double> params;  // canonical [0, 1] grid
    std::function<BvpProblem(double)> family;

    BvpProblem at(double s) const { return family(s); }
    int steps() const { return static_cast<int>(params.size()); }
};

inline std::vector<double> uniform_grid(int steps) {
    if (steps < 2) throw Error("a path needs at least two steps");
    std::vector<double> g(steps);
    for (int k = 0; k < steps; ++k) g[k] = static_cast<double>(k) / (steps - 1);
    return g;
}

struct StepMargin {
    double param = 0.0;
    double interior = 0.0;
    double boundary = 0.0;
    double max_angle = 0.0;  // principal angle of L+ frames against step 0
    bool elliptic = false;
    std::string note;
};

struct PathCertificate {
    std::vector<StepMargin> steps;
    double min_interior = 0.0;
    double min_boundary = 0.0;
    bool valid = false;
    std::string detail;
};

/// Collar cutoff for the pullback deformation: 1 near t = 0, 0 for t >= 1/2.
struct Cutoff {
    std::function<double(double)> psi;

    static Cutoff standard() {
        return Cutoff{[](double t) {
            if (t <= 1.0 / 6.0) return 1.0;
            if (t >= 1.0 / 3.0) return 0.0;
            return (1.0 / 3.0 - t) * 6.0;
        }};
    }

    void validate() const {
        for (double t : {0.0, 1e-4, 1e-2}) {
            if (std::abs(psi(t) - 1.0) > 1e-12)
                throw InvalidCutoffError("cutoff must equal 1 near t = 0");
        }
        for (double t : {0.5, 0.7, 1.0}) {
            if (std::abs(psi(t)) > 1e-12)
                throw InvalidCutoffError("cutoff must vanish for t >= 1/2");
        }
        double prev = psi(0.0);
        for (int k = 1; k <= 64; ++k) {
            double v = psi(k / 64.0);
            if (v > prev + 1e-12)
                throw InvalidCutoffError("cutoff must be nonincreasing");
            prev = v;
        }
    }
};

namespace detail {

inline bool t_independent(const CollarOperator& op, double tol = 1e-10) {
    for (const auto& c : op.coefficients()) {
        for (double x : {0.3, 2.1}) {
            for (double xi : {1.0, -1.0}) {
                Matrix a = c.eval(x, 0.0, xi, 0.0);
                for (double t : {0.37, 0.81, 1.0}) {
                    if ((c.eval(x, t, xi, 0.0) - a).norm() > tol * (1.0 + a.norm())) return false;
                }
            }
        }
    }
    return true;
}

// Oblique projector onto the span of decaying solutions of lam + a:
// eigenvalues mu of a with Im mu < 0.
inline Matrix decay_projector(const Matrix& a) {
    return spectral_projector(a, [](Complex z) { return z.imag() < 0.0; });
}

// Orthogonal projector onto the same subspace.
inline Matrix decay_orthoprojector(const Matrix& a) {
    Matrix f = canonical_frame(
        invariant_subspace(a, [](Complex z) { return z.imag() < 0.0; }));
    return f * f.adjoint();
}

/// Partial isometry factor of a matrix: U_r V_r^H from the thin SVD over the
/// singular values above tol * max.
inline Matrix partial_isometry(const Matrix& m, int expected_rank, double tol = 1e-8) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    int r = 0;
    for (int k = 0; k < sv.size(); ++k)
        if (sv(k) > tol * std::max(1.0, smax)) ++r;
    if (r != expected_rank)
        throw CannotRotateError("boundary symbol is not invertible on L+ (rank " +
                                std::to_string(r) + ", expected " +
                                std::to_string(expected_rank) + ")");
    return svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).adjoint();
}

}  // namespace detail

/// Sample ellipticity margins at every step of a path.  Failures become
/// verdicts, never exceptions.
inline PathCertificate certify_path(const HomotopyPath& path, const SampleGrid& grid = {8, 5, 16},
                                    const Tolerances& tol = {}) {
    PathCertificate cert;
    cert.min_interior = std::numeric_limits<double>::infinity();
    cert.min_boundary = std::numeric_limits<double>::infinity();
    cert.valid = true;

    // reference frames from step 0 for the principal-angle column
    std::vector<Matrix> ref_frames;
    const BvpProblem first = path.at(path.params.front());
    const double xref = first.manifold.component_kind() == BoundaryComponentKind::PointPair
                            ? 0.0
                            : 0.7;
    for (double s : path.params) {
        StepMargin m;
        m.param = s;
        BvpProblem prob = path.at(s);
        try {
            InteriorEllipticityReport ir = check_interior_ellipticity(prob.op, grid, tol.sl);
            m.interior = ir.min_singular_value;
            EllipticityReport br = sl_check(prob, grid, tol);
            m.boundary = br.global_min;
            m.elliptic = ir.min_abs_det > tol.sl && br.elliptic;
            if (!m.elliptic && br.rank_mismatch) m.note = br.detail;

            std::vector<Matrix> frames;
            for (double xi : prob.manifold.cosphere_directions()) {
                auto [fp, fm] =
                    bounded_subspaces(companion_matrix(prob.op, xref, xi), tol.root, xref, xi);
                frames.push_back(fp.columns);
            }
            if (ref_frames.empty()) {
                ref_frames = frames;
            } else if (ref_frames.size() == frames.size()) {
                for (size_t k = 0; k < frames.size(); ++k) {
                    if (ref_frames[k].rows() == frames[k].rows() &&
                        ref_frames[k].cols() == frames[k].cols())
                        m.max_angle =
                            std::max(m.max_angle, max_principal_angle(ref_frames[k], frames[k]));
                }
            }
        } catch (const EllipticityMarginError& e) {
            m.elliptic = false;
            m.interior = 0.0;
            m.boundary = 0.0;
            m.note = e.what();
        }
        cert.min_interior = std::min(cert.min_interior, m.interior);
        cert.min_boundary = std::min(cert.min_boundary, m.boundary);
        if (!m.elliptic && cert.valid) {
            cert.valid = false;
            cert.detail = "ellipticity lost at parameter " + std::to_string(s) +
                          (m.note.empty() ? "" : (": " + m.note));
        }
        cert.steps.push_back(std::move(m));
    }
    return cert;
}

/// Eigenvalue flattening: the tangential coefficient moves along
/// (1 - tau) a + tau (-i|xi|)(2S - 1), where S is the spectral projector onto
/// the decaying splitting.  Every eigenvalue follows (1 - tau) mu + tau sign,
/// L+/L- stay fixed, the boundary conditions do not move.
inline std::pair<HomotopyPath, PathCertificate> flatten_path(const BvpProblem& problem,
                                                             int steps = 101,
                                                             const SampleGrid& grid = {8, 5, 16},
                                                             const Tolerances& tol = {}) {
    if (problem.op.order() != 1) throw OrderError("flattening is defined for first-order operators");
    if (!detail::t_independent(problem.op))
        throw CapabilityError("flattening needs collar-constant coefficients (pull back first)");
    const int n = problem.op.rank();
    MatrixSymbol a = problem.op.coefficients()[1];

    HomotopyPath path;
    path.kind = PathKind::Flatten;
    path.params = uniform_grid(steps);
    BvpProblem base = problem;
    path.family = [base, a, n](double tau) {
        BvpProblem p = base;
        MatrixSymbol at(n, n, 1, [a, n, tau](const EvalPoint& pt) {
            Matrix a0 = a.eval(pt.x, 0.0, pt.xi, 0.0);
            Matrix s = detail::decay_projector(a0);
            Matrix flat = Complex(0.0, -std::abs(pt.xi)) * (2.0 * s - Matrix::Identity(n, n));
            return Matrix((1.0 - tau) * a0 + tau * flat);
        });
        if (tau == 0.0) at = a;  // endpoint matches the input exactly
        p.op = CollarOperator(1, {MatrixSymbol::identity(n), at},
                              tau == 0.0 ? base.op.interior_symbol() : std::nullopt);
        return p;
    };
    PathCertificate cert = certify_path(path, grid, tol);
    return {path, cert};
}

namespace detail {

// Shared per-point data of the rotation construction at one boundary point.
struct RotationFiber {
    Matrix s_oblique;   // oblique decay projector (n x n)
    Matrix p_orth;      // orthogonal decay projector (n x n)
    Matrix p_ext;       // diag(p_orth, 0) on C^(n+N)
    Matrix q_ext;       // diag(0, q) on C^(n+N)
    Matrix j0;          // embedded boundary condition on C^(n+N)
    Matrix u;           // partial isometry Im p_ext -> Im q_ext
    bool needs_bridge = false;
};

struct RotationSetup {
    int n = 0;          // original rank
    int nstab = 0;      // stabilizer rank N
    MatrixSymbol a;     // tangential coefficient
    MatrixSymbol q;     // target projection on C^N
    std::vector<MatrixSymbol> bjets;
    int brows = 0;
    double bridge_frac = 0.0;  // parameter share of the oblique->orthogonal bridge

    // All fiber data is homogeneous of degree 0, so it is evaluated at the
    // unit covector of the given direction (robust near xi = 0 where the
    // tangential part of the symbol vanishes).
    RotationFiber fiber(double x, double xi, double tol) const {
        RotationFiber f;
        const double xin = xi < 0.0 ? -1.0 : 1.0;
        Matrix a0 = a.eval(x, 0.0, xin, 0.0);
        f.s_oblique = decay_projector(a0);
        f.p_orth = decay_orthoprojector(a0);
        Matrix flat = Complex(0.0, -1.0) * (2.0 * f.s_oblique - Matrix::Identity(n, n));
        if ((a0 - flat).norm() > 1e-6 * (1.0 + a0.norm()))
            throw CannotRotateError("operator is not in flattened form; flatten first");
        f.needs_bridge = (f.s_oblique - f.p_orth).norm() > 1e-10;

        Matrix qv = q.eval(x, 0.0, xin, 0.0);
        if ((qv - qv.adjoint()).norm() > 1e-8)
            throw CannotRotateError("rotation target must be an orthogonal projection");
        const int dim = n + nstab;
        f.p_ext = Matrix::Zero(dim, dim);
        f.p_ext.topLeftCorner(n, n) = f.p_orth;
        f.q_ext = Matrix::Zero(dim, dim);
        f.q_ext.bottomRightCorner(nstab, nstab) = qv;

        Matrix brow = bjets[0].eval(x, 0.0, xin, 0.0);  // first-order: a single jet
        f.j0 = Matrix::Zero(dim, dim);
        f.j0.block(n, 0, brows, n) = brow;

        const int rank_plus = static_cast<int>(std::lround(f.p_orth.trace().real()));
        const int rank_q = static_cast<int>(std::lround(qv.trace().real()));
        if (rank_plus != rank_q)
            throw CannotRotateError("target projection rank " + std::to_string(rank_q) +
                                    " does not match rank(L+) = " + std::to_string(rank_plus));
        // isometry toward the target range, so the rotated family stays idempotent
        f.u = partial_isometry(f.q_ext * f.j0 * f.p_ext, rank_plus, tol);
        f.needs_bridge = f.needs_bridge || (f.j0 - f.u).norm() > 1e-10;
        return f;
    }
};

inline BvpProblem swap_components(const BvpProblem& p) {
    if (p.components() != 2) throw GeometryError("component swap needs two boundary components");
    BvpProblem q = p;
    q.op = p.op.reflected();
    std::swap(q.conditions[0], q.conditions[1]);
    std::swap(q.projections[0], q.projections[1]);
    return q;
}

}  // namespace detail

/// Rotation of the boundary condition of component `component` onto a target
/// projection acting on the stabilizer summand C^N, after the paper's
/// almost-projection family with the boundary symbol replaced by its unitary
/// polar factor.  When the flattened operator has an oblique decay splitting,
/// a straight-line projector bridge to the orthogonal splitting is prepended.
/// The other component's condition is carried along by the exact rotation
/// unitary, so its margins are preserved verbatim.
inline std::pair<HomotopyPath, PathCertificate> rotate_path(const BvpProblem& problem,
                                                            const MatrixSymbol& target,
                                                            int component = 0, int steps = 101,
                                                            const SampleGrid& grid = {8, 5, 16},
                                                            const Tolerances& tol = {}) {
    if (component == 1) {
        auto [path, cert] =
            rotate_path(detail::swap_components(problem), target, 0, steps, grid, tol);
        HomotopyPath swapped;
        swapped.kind = path.kind;
        swapped.params = path.params;
        auto fam = path.family;
        swapped.family = [fam](double s) { return detail::swap_components(fam(s)); };
        return {swapped, certify_path(swapped, grid, tol)};
    }
    if (problem.op.order() != 1) throw OrderError("rotation is defined for first-order operators");
    if (!detail::t_independent(problem.op))
        throw CapabilityError("rotation needs collar-constant coefficients");

    detail::RotationSetup setup;
    setup.n = problem.op.rank();
    setup.a = problem.op.coefficients()[1];
    setup.q = target;
    setup.nstab = target.rows();
    setup.bjets = problem.condition(0).jets;
    setup.brows = problem.condition(0).target_rank;
    if (setup.brows > setup.nstab)
        throw ShapeError("target projection cannot host the boundary condition image");

    // decide whether the oblique bridge segment is needed anywhere
    bool bridge = false;
    for (double x : detail::boundary_x_samples(problem.manifold, 8))
        for (double xi : problem.manifold.cosphere_directions())
            bridge = bridge || setup.fiber(x, xi, tol.rank).needs_bridge;
    setup.bridge_frac = bridge ? 0.25 : 0.0;

    const int n = setup.n, nstab = setup.nstab, dim = n + nstab;
    const double frac = setup.bridge_frac;
    const double rank_tol = tol.rank;

    // stabilized data of the other component, constant up to the transport
    const bool two_sided = problem.components() == 2;
    BoundaryCondition cond1;
    std::optional<ProjectionSymbol> proj1;
    if (two_sided) {
        BoundaryCondition stab({MatrixSymbol::identity(nstab)}, nstab);
        cond1 = BoundaryCondition::block_diag(problem.condition(1), stab);
        if (problem.is_spectral(1)) {
            ProjectionSymbol p;
            p.symbol = MatrixSymbol::block_diag(problem.projections[1]->symbol,
                                                MatrixSymbol::identity(nstab));
            p.pullback = problem.projections[1]->pullback;
            proj1 = p;
        }
    }

    HomotopyPath path;
    path.kind = PathKind::Rotate;
    path.params = uniform_grid(steps);
    ModelManifold manifold = problem.manifold;
    path.family = [setup, manifold, cond1, proj1, two_sided, n, nstab, dim, frac,
                   rank_tol](double s) {
        // split the parameter into bridge [0, frac] and rotation (frac, 1];
        // s = 0 always reproduces the stabilized input exactly
        const double sb = frac > 0.0 ? std::min(1.0, s / frac) : (s == 0.0 ? 0.0 : 1.0);
        const double phi = (s <= frac ? 0.0 : (s - frac) / (1.0 - frac)) * M_PI / 2.0;

        MatrixSymbol op_sym(dim, dim, 1, [setup, sb, phi, n, nstab, dim, rank_tol](const EvalPoint& pt) {
            detail::RotationFiber f = setup.fiber(pt.x, pt.xi, rank_tol);
            Matrix proj;
            if (phi == 0.0) {
                Matrix bridge_p = (1.0 - sb) * f.s_oblique + sb * f.p_orth;
                proj = Matrix::Zero(dim, dim);
                proj.topLeftCorner(n, n) = bridge_p;
            } else if (phi == M_PI / 2.0) {
                proj = f.q_ext;  // endpoint is the target, exactly
            } else {
                const double c = std::cos(phi), si = std::sin(phi);
                proj = c * c * f.p_ext + si * si * f.q_ext +
                       c * si * (f.u + Matrix(f.u.adjoint()));
            }
            const double axi = std::abs(pt.xi);
            return Matrix(Complex(0.0, -axi) * (2.0 * proj - Matrix::Identity(dim, dim)));
        });

        MatrixSymbol jets0(dim, dim, 0, [setup, sb, phi, dim, rank_tol](const EvalPoint& pt) {
            detail::RotationFiber f = setup.fiber(pt.x, pt.xi, rank_tol);
            if (phi == 0.0) return Matrix((1.0 - sb) * f.j0 + sb * f.u);
            if (phi == M_PI / 2.0) return f.q_ext;
            return Matrix(std::cos(phi) * f.u + std::sin(phi) * f.q_ext);
        });
        MatrixSymbol proj0(dim, dim, 0, [setup, dim, rank_tol](const EvalPoint& pt) {
            detail::RotationFiber f = setup.fiber(pt.x, pt.xi, rank_tol);
            return f.q_ext;
        });

        BvpProblem p;
        p.manifold = manifold;
        p.op = CollarOperator(1, {MatrixSymbol::identity(dim), op_sym});
        p.conditions.push_back(BoundaryCondition({jets0}, dim));
        ProjectionSymbol ps;
        ps.symbol = proj0;
        p.projections.push_back(ps);

        if (two_sided) {
            // transport by R_phi = I + sin(phi) K - (1 - cos(phi)) Pi,
            // K = u - u^H, Pi = u u^H + u^H u
            // spectral targets rotate along with the projection, so the
            // condition is conjugated; classical targets stay fixed and the
            // condition is only pulled back
            const bool conjugate = static_cast<bool>(proj1);
            std::vector<MatrixSymbol> jets1;
            for (const auto& j : cond1.jets) {
                MatrixSymbol jj = j;
                jets1.emplace_back(j.rows(), dim, 0,
                                   [setup, jj, phi, dim, rank_tol, conjugate](const EvalPoint& pt) {
                                       if (phi == 0.0) return jj.eval(pt);
                                       detail::RotationFiber f = setup.fiber(pt.x, pt.xi, rank_tol);
                                       Matrix k = f.u - Matrix(f.u.adjoint());
                                       Matrix pi = f.u * f.u.adjoint() + f.u.adjoint() * f.u;
                                       Matrix r = Matrix::Identity(dim, dim) + std::sin(phi) * k -
                                                  (1.0 - std::cos(phi)) * pi;
                                       Matrix moved = jj.eval(pt) * r.adjoint();
                                       if (conjugate) moved = r * moved;
                                       return moved;
                                   });
            }
            p.conditions.push_back(BoundaryCondition(std::move(jets1), cond1.target_rank));
            if (proj1) {
                MatrixSymbol p1 = proj1->symbol;
                ProjectionSymbol moved;
                moved.symbol = MatrixSymbol(dim, dim, 0,
                                            [setup, p1, phi, dim, rank_tol](const EvalPoint& pt) {
                                                if (phi == 0.0) return p1.eval(pt);
                                                detail::RotationFiber f =
                                                    setup.fiber(pt.x, pt.xi, rank_tol);
                                                Matrix k = f.u - Matrix(f.u.adjoint());
                                                Matrix pi = f.u * f.u.adjoint() +
                                                            f.u.adjoint() * f.u;
                                                Matrix r = Matrix::Identity(dim, dim) +
                                                           std::sin(phi) * k -
                                                           (1.0 - std::cos(phi)) * pi;
                                                return Matrix(r * p1.eval(pt) * r.adjoint());
                                            });
                p.projections.push_back(moved);
            } else {
                p.projections.push_back(std::nullopt);
            }
        }
        return p;
    };
    PathCertificate cert = certify_path(path, grid, tol);
    return {path, cert};
}

/// Stabilized form of a first-order problem matching rotate_path's start: the
/// operator gains a D_+-type block of rank N, the rotated component's
/// condition is embedded into C^N, the other component receives the identity
/// trace condition on the stabilizer.
inline BvpProblem stabilized_start(const BvpProblem& problem, int nstab) {
    const int n = problem.op.rank();
    std::vector<Expr> d1(static_cast<size_t>(nstab) * nstab, Expr(0.0));
    for (int k = 0; k < nstab; ++k)
        d1[static_cast<size_t>(k) * nstab + k] = Expr(Complex(0, 1)) * Expr::abs_xi();
    CollarOperator stab(1, {MatrixSymbol::identity(nstab), MatrixSymbol(nstab, nstab, 1, d1)});
    BvpProblem out;
    out.manifold = problem.manifold;
    out.op = CollarOperator::block_diag(problem.op, stab);
    const int dim = n + nstab;
    MatrixSymbol b0 = problem.condition(0).jets[0];
    const int brows = problem.condition(0).target_rank;
    MatrixSymbol embedded(dim, dim, 0, [b0, n, nstab, dim, brows](const EvalPoint& pt) {
        Matrix j = Matrix::Zero(dim, dim);
        j.block(n, 0, brows, n) = b0.eval(pt);
        return j;
    });
    out.conditions.push_back(BoundaryCondition({embedded}, dim));
    ProjectionSymbol q;
    MatrixSymbol qtarget = problem.is_spectral(0)
                               ? problem.projections[0]->symbol
                               : MatrixSymbol::identity(brows);
    q.symbol = MatrixSymbol(dim, dim, 0, [qtarget, n, nstab, dim](const EvalPoint& pt) {
        Matrix m = Matrix::Zero(dim, dim);
        m.bottomRightCorner(nstab, nstab) = qtarget.eval(pt);
        return m;
    });
    out.projections.push_back(q);
    if (problem.components() == 2) {
        BoundaryCondition trace({MatrixSymbol::identity(nstab)}, nstab);
        out.conditions.push_back(BoundaryCondition::block_diag(problem.condition(1), trace));
        if (problem.is_spectral(1)) {
            ProjectionSymbol p;
            p.symbol = MatrixSymbol::block_diag(problem.projections[1]->symbol,
                                                MatrixSymbol::identity(nstab));
            p.pullback = problem.projections[1]->pullback;
            out.projections.push_back(p);
        } else {
            out.projections.push_back(std::nullopt);
        }
    }
    return out;
}

/// Collar pullback (coefficients reparametrized by t -> t - psi(t) tau) of a
/// boundary family supplied by `path` for the negative collar times of the
/// rotated component.  Outside the collar the problem is untouched; the
/// pulled boundary condition is the one of path.at(tau).
inline BvpProblem collar_pull(const BvpProblem& problem, const HomotopyPath& path,
                              const Cutoff& cutoff, double tau) {
    cutoff.validate();
    if (tau < 0.0 || tau > 1.0) throw Error("collar parameter must lie in [0, 1]");
    if (tau == 0.0) return problem;
    BvpProblem start = path.at(0.0);
    if (start.op.rank() != problem.op.rank() || start.op.order() != problem.op.order())
        throw ShapeError("path does not start at the given problem (rank/order mismatch)");
    for (double x : {0.4, 1.9}) {
        for (double xi : {1.0, -1.0}) {
            for (size_t k = 0; k < problem.op.coefficients().size(); ++k) {
                Matrix a = problem.op.coefficients()[k].eval(x, 0.0, xi, 0.0);
                Matrix b = start.op.coefficients()[k].eval(x, 0.0, xi, 0.0);
                if ((a - b).norm() > 1e-8 * (1.0 + a.norm()))
                    throw Error("path does not start at the boundary restriction of the problem");
            }
        }
    }

    auto fam = path.family;
    auto psi = cutoff.psi;
    BvpProblem out;
    out.manifold = problem.manifold;
    std::vector<MatrixSymbol> coeffs;
    const auto& base_coeffs = problem.op.coefficients();
    for (size_t k = 0; k < base_coeffs.size(); ++k) {
        MatrixSymbol c = base_coeffs[k];
        coeffs.emplace_back(c.rows(), c.cols(), c.degree(),
                            [c, fam, psi, tau, k](const EvalPoint& pt) {
                                const double u = pt.t - psi(pt.t) * tau;
                                if (u >= 0.0) {
                                    EvalPoint q = pt;
                                    q.t = u;
                                    return c.eval(q);
                                }
                                BvpProblem step = fam(std::min(1.0, -u));
                                EvalPoint q = pt;
                                q.t = 0.0;
                                return step.op.coefficients()[k].eval(q);
                            });
    }
    std::optional<MatrixSymbol> interior;
    if (problem.op.interior_symbol()) {
        MatrixSymbol io = *problem.op.interior_symbol();
        interior = MatrixSymbol(io.rows(), io.cols(), io.degree(),
                                [io, psi, tau](const EvalPoint& pt) {
                                    EvalPoint q = pt;
                                    q.t = std::max(0.0, pt.t - psi(pt.t) * tau);
                                    return io.eval(q);
                                });
    }
    out.op = CollarOperator(problem.op.order(), std::move(coeffs), std::move(interior));
    BvpProblem end = path.at(tau);
    out.conditions.push_back(end.condition(0));
    out.projections.push_back(end.projections.empty() ? std::nullopt : end.projections[0]);
    if (problem.components() == 2) {
        out.conditions.push_back(problem.condition(1));
        out.projections.push_back(problem.projections.size() > 1 ? problem.projections[1]
                                                                 : std::nullopt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Order reduction
// ---------------------------------------------------------------------------

namespace detail {

using Poly = std::vector<Complex>;  // coefficients, index = power of lam

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly c(a.size() + b.size() - 1, Complex(0.0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
}

// (lam - i w)^k (lam + i w)^(m-k)
inline Poly plus_minus_basis(int k, int m, double w) {
    Poly p{Complex(1.0)};
    for (int j = 0; j < k; ++j) p = poly_mul(p, Poly{Complex(0.0, -w), Complex(1.0)});
    for (int j = 0; j < m - k; ++j) p = poly_mul(p, Poly{Complex(0.0, w), Complex(1.0)});
    return p;
}

/// Solve sum_k d_k (lam - iw)^k (lam + iw)^(m-k) = sum_j coeffs[j] lam^j for
/// the matrices d_0..d_m (coeffs indexed by the power of lam, size m+1).
inline std::vector<Matrix> plus_minus_decompose(const std::vector<Matrix>& coeffs, double w) {
    const int m = static_cast<int>(coeffs.size()) - 1;
    Eigen::MatrixXcd cmat(m + 1, m + 1);  // cmat(j, k) = coeff of lam^j in basis k
    for (int k = 0; k <= m; ++k) {
        Poly p = plus_minus_basis(k, m, w);
        for (int j = 0; j <= m; ++j) cmat(j, k) = p[j];
    }
    Eigen::MatrixXcd cinv = cmat.inverse();
    std::vector<Matrix> d(m + 1, Matrix::Zero(coeffs[0].rows(), coeffs[0].cols()));
    for (int k = 0; k <= m; ++k)
        for (int j = 0; j <= m; ++j) d[k] += cinv(k, j) * coeffs[j];
    return d;
}

// Frozen data of the order reduction at one boundary point.
struct ReductionFiber {
    int m = 0, n = 0;
    double w = 1.0;
    std::vector<Matrix> a;  // A_0..A_m (lam^(m-k) coefficients)
    std::vector<Matrix> d;  // decomposition, sum = identity

    static ReductionFiber at(const CollarOperator& op, double x, double xi) {
        ReductionFiber f;
        f.m = op.order();
        f.n = op.rank();
        f.w = std::abs(xi);
        f.a = op.freeze(x, 0.0, xi);
        std::vector<Matrix> bypow(f.m + 1);
        for (int j = 0; j <= f.m; ++j) bypow[j] = f.a[f.m - j];
        f.d = plus_minus_decompose(bypow, f.w);
        return f;
    }

    Complex pp(Complex lam) const { return lam + Complex(0.0, w); }
    Complex pm(Complex lam) const { return lam - Complex(0.0, w); }

    Matrix sigma_d(Complex lam) const {
        Matrix s = Matrix::Zero(n, n);
        Complex p = 1.0;
        for (int k = m; k >= 0; --k) {
            s += a[k] * p;
            p *= lam;
        }
        return s;
    }

    /// The big-matrix family D'_tau evaluated at lam (size mn x mn).
    Matrix dprime(double tau, Complex lam) const {
        Matrix big = Matrix::Zero(m * n, m * n);
        const Complex ppw = std::pow(pp(lam), m);
        const Complex sub = pm(lam) * std::pow(pp(lam), m - 1);
        const double tm = std::pow(tau, m);
        big.topLeftCorner(n, n) = (1.0 - tm) * sigma_d(lam) + tm * d[0] * ppw;
        for (int j = 1; j <= m - 1; ++j) {
            Matrix entry = std::pow(tau, m - j) * ppw * d[j];
            if (j == m - 1) entry += tau * sub * d[m];
            big.block(0, j * n, n, n) = entry;
        }
        for (int j = 1; j <= m - 1; ++j) {
            big.block(j * n, (j - 1) * n, n, n) = -tau * sub * Matrix::Identity(n, n);
            big.block(j * n, j * n, n, n) = ppw * Matrix::Identity(n, n);
        }
        return big;
    }

    /// Upper and lower triangular factors of the lam^m coefficient of D'_tau.
    std::pair<Matrix, Matrix> triangular_factors(double tau) const {
        Matrix t1 = Matrix::Identity(m * n, m * n);
        for (int j = 1; j <= m - 1; ++j) {
            Matrix s = Matrix::Zero(n, n);
            for (int k = j; k <= m; ++k) s += d[k];
            t1.block(0, j * n, n, n) = std::pow(tau, m - j) * s;
        }
        Matrix t2 = Matrix::Identity(m * n, m * n);
        for (int j = 1; j <= m - 1; ++j)
            t2.block(j * n, (j - 1) * n, n, n) = -tau * Matrix::Identity(n, n);
        return {t1, t2};
    }

    /// Normalized family member sigma(D_tau)(lam).
    Matrix dtau(double tau, Complex lam) const {
        auto [t1, t2] = triangular_factors(tau);
        return (t1 * t2).inverse() * dprime(tau, lam);
    }

    /// lam-coefficients of a matrix polynomial by Vandermonde interpolation.
    static std::vector<Matrix> poly_coefficients(const std::function<Matrix(Complex)>& f,
                                                 int degree, int dim) {
        Eigen::MatrixXcd v(degree + 1, degree + 1);
        std::vector<Matrix> vals(degree + 1);
        for (int q = 0; q <= degree; ++q) {
            const Complex node(0.3 + q, 0.7);  // generic nodes, well-conditioned for small m
            for (int j = 0; j <= degree; ++j) v(q, j) = std::pow(node, j);
            vals[q] = f(node);
        }
        Eigen::MatrixXcd vinv = v.inverse();
        std::vector<Matrix> out(degree + 1, Matrix::Zero(dim, dim));
        for (int j = 0; j <= degree; ++j)
            for (int q = 0; q <= degree; ++q) out[j] += vinv(j, q) * vals[q];
        return out;
    }
};

}  // namespace detail

struct OrderReductionTrace {
    std::function<std::vector<Matrix>(double x, double xi)> decomposition;  // d_0..d_m
    std::function<Matrix(double tau, double x, double xi, Complex lam)> dprime_family;
    std::function<std::pair<Matrix, Matrix>(double tau, double x, double xi)> triangular_factors;
    double decomposition_residual = 0.0;  // max |sum d_k - 1|
    double endpoint_residual = 0.0;       // boundary-condition factorization on L+ frames
    double projection_min_sv = 0.0;       // pr: L+(D_tau) -> L+(D), worst case
    bool trivial = false;                 // m = 1 or already-factored input
};

struct OrderReductionResult {
    BvpProblem first_order;       // the factored problem (D', B')
    HomotopyPath path;            // global collar-pulled family of the stabilized problem
    OrderReductionTrace trace;
    PathCertificate certificate;
};

/// Reduce a problem of order m >= 2 to first order: stabilize by m-1 copies
/// of the m-th power model operator, run the block family D_tau localized in
/// the collar of the first component, and read off the endpoint factorization
/// (D', B') composed with the (m-1)-th model power.
inline OrderReductionResult reduce_order(const BvpProblem& problem, int steps = 101,
                                         const SampleGrid& grid = {8, 5, 16},
                                         const Tolerances& tol = {}) {
    OrderReductionResult res;
    const int m = problem.op.order();
    const int n = problem.op.rank();
    if (m == 1) {
        res.first_order = problem;
        res.trace.trivial = true;
        HomotopyPath path;
        path.kind = PathKind::OrderReduce;
        path.params = uniform_grid(2);
        BvpProblem copy = problem;
        path.family = [copy](double) { return copy; };
        res.path = path;
        res.certificate = certify_path(path, grid, tol);
        return res;
    }
    if (!detail::t_independent(problem.op))
        throw CapabilityError("order reduction needs collar-constant coefficients");

    CollarOperator op = problem.op;
    const int dim = m * n;

    auto fiber_at = [op](double x, double xi) { return detail::ReductionFiber::at(op, x, xi); };

    // trace plumbing
    res.trace.decomposition = [fiber_at](double x, double xi) { return fiber_at(x, xi).d; };
    res.trace.dprime_family = [fiber_at](double tau, double x, double xi, Complex lam) {
        return fiber_at(x, xi).dprime(tau, lam);
    };
    res.trace.triangular_factors = [fiber_at](double tau, double x, double xi) {
        return fiber_at(x, xi).triangular_factors(tau);
    };
    for (double x : detail::boundary_x_samples(problem.manifold, 8)) {
        for (double xi : problem.manifold.cosphere_directions()) {
            detail::ReductionFiber f = fiber_at(x, xi);
            Matrix s = Matrix::Zero(n, n);
            for (const auto& dk : f.d) s += dk;
            res.trace.decomposition_residual = std::max(
                res.trace.decomposition_residual, (s - Matrix::Identity(n, n)).norm());
        }
    }
    if (res.trace.decomposition_residual > 1e-8)
        throw NormalizationError("plus/minus decomposition does not sum to the identity");

    // stabilized conditions (constant along the family)
    std::vector<MatrixSymbol> jets0;
    const BoundaryCondition& b0 = problem.condition(0);
    const int g0 = b0.target_rank;
    for (int l = 0; l < m; ++l) {
        MatrixSymbol bl = b0.jets[l];
        jets0.emplace_back(g0, dim, 0, [bl, n, dim, g0](const EvalPoint& pt) {
            Matrix row = Matrix::Zero(g0, dim);
            row.leftCols(n) = bl.eval(pt);
            return row;
        });
    }
    BoundaryCondition cond0(std::move(jets0), g0);

    BoundaryCondition cond1;
    std::optional<ProjectionSymbol> proj1;
    const bool two_sided = problem.components() == 2;
    if (two_sided) {
        const BoundaryCondition& b1 = problem.condition(1);
        const int g1 = b1.target_rank;
        const int rows1 = g1 + (m - 1) * dim;
        std::vector<MatrixSymbol> jets1;
        for (int l = 0; l < m; ++l) {
            MatrixSymbol bl = b1.jets[l];
            jets1.emplace_back(rows1, dim, 0, [bl, n, dim, g1, rows1, l, m](const EvalPoint& pt) {
                Matrix row = Matrix::Zero(rows1, dim);
                row.block(0, 0, g1, n) = bl.eval(pt);
                // full-jet conditions on each stabilizer copy
                for (int c = 1; c < m; ++c) {
                    const int r0 = g1 + (c - 1) * dim + l * n;
                    row.block(r0, c * n, n, n) = Matrix::Identity(n, n);
                }
                return row;
            });
        }
        cond1 = BoundaryCondition(std::move(jets1), rows1);
        proj1 = std::nullopt;
    }

    // boundary family: t-independent stabilized operator at parameter tau
    ModelManifold manifold = problem.manifold;
    auto member_op = [fiber_at, m, dim](double tau) {
        std::vector<MatrixSymbol> coeffs;
        for (int k = 0; k <= m; ++k) {
            coeffs.emplace_back(dim, dim, k == 0 ? 0 : 1,
                                [fiber_at, tau, m, dim, k](const EvalPoint& pt) {
                                    detail::ReductionFiber f = fiber_at(pt.x, pt.xi);
                                    auto coefs = detail::ReductionFiber::poly_coefficients(
                                        [&](Complex lam) { return f.dtau(tau, lam); }, m, dim);
                                    return coefs[m - k];  // coefficient of lam^(m-k)
                                });
        }
        return CollarOperator(m, std::move(coeffs));
    };

    HomotopyPath boundary_family;
    boundary_family.kind = PathKind::OrderReduce;
    boundary_family.params = uniform_grid(steps);
    boundary_family.family = [member_op, manifold, cond0, cond1, proj1, two_sided](double tau) {
        BvpProblem p;
        p.manifold = manifold;
        p.op = member_op(tau);
        p.conditions.push_back(cond0);
        p.projections.push_back(std::nullopt);
        if (two_sided) {
            p.conditions.push_back(cond1);
            p.projections.push_back(proj1);
        }
        return p;
    };

    // an input that already factors through the (m-1)-th model power has
    // sigma(D)(lam) / (lam + i|xi|)^(m-1) linear in lam; the family is then
    // constant up to the triangular factors and we keep the base problem
    bool factored = true;
    for (double x : detail::boundary_x_samples(problem.manifold, 8)) {
        for (double xi : problem.manifold.cosphere_directions()) {
            const double w = std::abs(xi);
            std::vector<Matrix> a = op.freeze(x, 0.0, xi);
            std::vector<Matrix> q(3);
            for (int j = 0; j < 3; ++j) {
                const Complex lam(0.5 + j, 0.0);
                Matrix val = Matrix::Zero(n, n);
                for (int k = 0; k <= m; ++k) val += std::pow(lam, m - k) * a[k];
                q[j] = val / std::pow(lam + Complex(0.0, w), m - 1);
            }
            if ((q[2] - 2.0 * q[1] + q[0]).norm() > 1e-10) factored = false;
        }
        if (!factored) break;
    }

    // global path: pull the family into the collar of component 0
    BvpProblem base = boundary_family.at(0.0);
    Cutoff cutoff = Cutoff::standard();
    HomotopyPath path;
    path.kind = PathKind::OrderReduce;
    path.params = uniform_grid(steps);
    if (factored) {
        res.trace.trivial = true;
        path.family = [base](double) { return base; };
    } else {
        path.family = [base, boundary_family, cutoff](double tau) {
            return collar_pull(base, boundary_family, cutoff, tau);
        };
    }
    res.path = path;
    res.certificate = certify_path(path, grid, tol);

    // endpoint first-order problem (D', B')
    auto dprime_first = [fiber_at, m, n, dim](double x, double xi) {
        detail::ReductionFiber f = fiber_at(x, xi);
        auto [t1, t2] = f.triangular_factors(1.0);
        Matrix linv = (t1 * t2).inverse();
        return detail::ReductionFiber::poly_coefficients(
            [&](Complex lam) {
                Matrix m1 = Matrix::Zero(dim, dim);
                const Complex pp = f.pp(lam), pm = f.pm(lam);
                for (int j = 0; j <= m - 1; ++j) {
                    Matrix entry = f.d[j] * pp;
                    if (j == m - 1) entry += f.d[m] * pm;
                    m1.block(0, j * n, n, n) = entry;
                }
                for (int j = 1; j <= m - 1; ++j) {
                    m1.block(j * n, (j - 1) * n, n, n) = -pm * Matrix::Identity(n, n);
                    m1.block(j * n, j * n, n, n) = pp * Matrix::Identity(n, n);
                }
                return Matrix(linv * m1);
            },
            1, dim);
    };
    std::vector<MatrixSymbol> fo_coeffs;
    for (int k = 0; k <= 1; ++k) {
        fo_coeffs.emplace_back(dim, dim, k, [dprime_first, k](const EvalPoint& pt) {
            return dprime_first(pt.x, pt.xi)[1 - k];
        });
    }
    res.first_order.manifold = problem.manifold;
    res.first_order.op = CollarOperator(1, std::move(fo_coeffs));

    // B': decomposition of the condition jets in the order-(m-1) basis
    auto bprime_row = [b0, m, n, g0](double x, double xi) {
        std::vector<Matrix> bypow(m);
        for (int l = 0; l < m; ++l) bypow[l] = b0.jets[l].eval(x, 0.0, xi, 0.0);
        std::vector<Matrix> bk = detail::plus_minus_decompose(bypow, std::abs(xi));
        Matrix row(g0, m * n);
        for (int k = 0; k < m; ++k) row.middleCols(k * n, n) = bk[k];
        return row;
    };
    res.first_order.conditions.push_back(BoundaryCondition(
        {MatrixSymbol(g0, dim, 0,
                      [bprime_row](const EvalPoint& pt) { return bprime_row(pt.x, pt.xi); })},
        g0));
    res.first_order.projections.push_back(std::nullopt);
    if (two_sided) {
        // deterministic elliptic closing condition on the second component
        CollarOperator fo = res.first_order.op;
        Matrix ref_comp = companion_matrix(fo.reflected(), 0.3, 1.0);
        auto [ref_fp, ref_fm] = bounded_subspaces(ref_comp, tol.root);
        const int g1 = ref_fp.rank();
        res.first_order.conditions.push_back(BoundaryCondition(
            {MatrixSymbol(g1, dim, 0,
                          [fo, g1, tol](const EvalPoint& pt) {
                              auto [fp, fm] = bounded_subspaces(
                                  companion_matrix(fo.reflected(), pt.x, pt.xi), tol.root);
                              if (fp.rank() != g1)
                                  throw Error("rank of L+ jumps on the closing component");
                              return Matrix(fp.columns.adjoint());
                          })},
            g1));
        res.first_order.projections.push_back(std::nullopt);
    }

    // endpoint factorization residual: on L+ frames of the tau=1 system,
    // sigma(B) on the first block equals sigma(B') composed with the jet map
    // of (-i d/dt + i|xi|)^(m-1)
    for (double x : detail::boundary_x_samples(problem.manifold, 8)) {
        for (double xi : problem.manifold.cosphere_directions()) {
            CollarOperator end_op = member_op(1.0);
            Matrix comp = companion_matrix(end_op, x, xi);
            auto [fp, fm] = bounded_subspaces(comp, tol.root, x, xi);

            // original-side row: B acting on the jets of U_0
            Matrix lhs_row = Matrix::Zero(g0, m * dim);
            for (int l = 0; l < m; ++l)
                lhs_row.block(0, l * dim, g0, n) = b0.jets[l].eval(x, 0.0, xi, 0.0);

            // factored side: traces of V = (-i d/dt + i|xi|)^(m-1) U, then B'
            const double w = std::abs(xi);
            Matrix trace_map = Matrix::Zero(dim, m * dim);
            {
                // (-i d/dt + iw)^(m-1) = sum_q binom(m-1, q) (iw)^(m-1-q) (-i d/dt)^q
                std::vector<Complex> cb(m, Complex(0.0));
                detail::Poly p{Complex(1.0)};
                for (int j = 0; j < m - 1; ++j)
                    p = detail::poly_mul(p, detail::Poly{Complex(0.0, w), Complex(1.0)});
                for (int q = 0; q < m; ++q) cb[q] = p[q];
                for (int q = 0; q < m; ++q)
                    trace_map.block(0, q * dim, dim, dim) = cb[q] * Matrix::Identity(dim, dim);
            }
            Matrix rhs_row = bprime_row(x, xi) * trace_map;

            Matrix diff = (lhs_row - rhs_row) * fp.columns;
            res.trace.endpoint_residual = std::max(res.trace.endpoint_residual, diff.norm());

            // Eq.-(23)-type check: pr onto the first block is injective on L+
            Matrix pr = Matrix::Zero(m * n, m * dim);
            for (int l = 0; l < m; ++l)
                pr.block(l * n, l * dim, n, n) = Matrix::Identity(n, n);
            // compare ranks against the original operator's L+
            auto [ofp, ofm] = bounded_subspaces(companion_matrix(op, x, xi), tol.root, x, xi);
            Matrix projected = pr * fp.columns;
            const double sv = fp.rank() == ofp.rank() && fp.rank() > 0
                                  ? min_singular_value(projected)
                                  : (fp.rank() == ofp.rank() ? 1.0 : 0.0);
            if (res.trace.projection_min_sv == 0.0 || sv < res.trace.projection_min_sv)
                res.trace.projection_min_sv = sv;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Reduction to spectral form
// ---------------------------------------------------------------------------

struct SpectralReduction {
    BvpProblem problem;  // endpoint: operator -i|xi|(2P-1)-form, condition = P
    HomotopyPath path;
    PathCertificate certificate;
};

namespace detail {

inline HomotopyPath concatenate(std::vector<HomotopyPath> segments, PathKind kind, int steps) {
    HomotopyPath out;
    out.kind = kind;
    out.params = uniform_grid(steps);
    const double seg = 1.0 / static_cast<double>(segments.size());
    out.family = [segments, seg](double s) {
        size_t idx = std::min(segments.size() - 1,
                              static_cast<size_t>(std::floor(s / seg)));
        const double local = std::clamp((s - idx * seg) / seg, 0.0, 1.0);
        return segments[idx].at(local);
    };
    return out;
}

}  // namespace detail

/// Flatten, then rotate every classical component onto a projection
/// condition.  The endpoint is a spectral problem whose boundary-value
/// subspace at the rotated component is the (embedded) original one.
inline SpectralReduction reduce_to_spectral(const BvpProblem& problem, int steps = 101,
                                            const SampleGrid& grid = {8, 5, 16},
                                            const Tolerances& tol = {}) {
    if (problem.op.order() != 1)
        throw OrderError("spectral reduction is defined for first-order problems");
    std::vector<HomotopyPath> segments;
    auto [fpath, fcert] = flatten_path(problem, steps, grid, tol);
    segments.push_back(fpath);
    BvpProblem current = fpath.at(1.0);
    for (int c = 0; c < problem.components(); ++c) {
        if (current.is_spectral(c)) continue;
        MatrixSymbol target = MatrixSymbol::identity(current.condition(c).target_rank);
        auto [rpath, rcert] = rotate_path(current, target, c, steps, grid, tol);
        // splice: the rotation starts at the stabilized form of `current`
        segments.push_back(rpath);
        current = rpath.at(1.0);
    }
    SpectralReduction red;
    red.problem = current;
    red.path = detail::concatenate(std::move(segments), PathKind::ToSpectral, steps);
    red.certificate = certify_path(red.path, grid, tol);
    return red;
}

}  // namespace bvp
