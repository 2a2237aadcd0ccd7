#pragma once

// Model manifolds, collar-form operators, boundary conditions and boundary
// value problems.  A collar operator is stored once, in the inward collar
// coordinate of the first boundary component; the second component (when the
// manifold has one) sees the reflected operator t -> 1-t, lam -> -lam,
// renormalized so the leading coefficient stays the identity.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "bvp/matrix_util.hpp"
#include "bvp/symbol.hpp"

namespace bvp {

enum class ManifoldKind { Interval, Cylinder, Disk, Annulus };

enum class BoundaryComponentKind { PointPair, Circle };

struct ModelManifold {
    ManifoldKind kind = ManifoldKind::Cylinder;

    static ModelManifold interval() { return {ManifoldKind::Interval}; }
    static ModelManifold cylinder() { return {ManifoldKind::Cylinder}; }
    static ModelManifold disk() { return {ManifoldKind::Disk}; }
    static ModelManifold annulus() { return {ManifoldKind::Annulus}; }

    int dimension() const { return kind == ManifoldKind::Interval ? 1 : 2; }

    int boundary_components() const {
        switch (kind) {
            case ManifoldKind::Interval: return 2;
            case ManifoldKind::Cylinder: return 2;
            case ManifoldKind::Annulus: return 2;
            case ManifoldKind::Disk: return 1;
        }
        return 0;
    }

    BoundaryComponentKind component_kind() const {
        return kind == ManifoldKind::Interval ? BoundaryComponentKind::PointPair
                                              : BoundaryComponentKind::Circle;
    }

    /// Directions of the unit cotangent sphere of one boundary component.
    std::vector<double> cosphere_directions() const {
        if (kind == ManifoldKind::Interval) return {1.0};  // formal unit covector
        return {1.0, -1.0};
    }

    std::string name() const {
        switch (kind) {
            case ManifoldKind::Interval: return "interval";
            case ManifoldKind::Cylinder: return "cylinder";
            case ManifoldKind::Disk: return "disk";
            case ManifoldKind::Annulus: return "annulus";
        }
        return "?";
    }
};

struct Tolerances {
    double root = 1e-8;       // minimum |Im lambda| of ODE roots
    double sl = 1e-8;         // minimum singular value of the boundary symbol
    double rank = 1e-8;       // rank decisions in SVD-based counts
    double idem = 1e-10;      // projection idempotency residual
    double spectral_cut = 1e-10;  // eigenvalues this close to Re = 0 are an error
    double gap = 1e3;         // required zero/nonzero singular-value gap ratio
};

struct SampleGrid {
    int nx = 24;       // boundary coordinate samples
    int nt = 9;        // collar coordinate samples
    int nsphere = 64;  // samples of the unit (xi, lam) sphere

    std::string describe() const {
        return "nx=" + std::to_string(nx) + " nt=" + std::to_string(nt) +
               " nsphere=" + std::to_string(nsphere);
    }
};

/// Collar-form operator of order m: sum of D_k(t) (-i d/dt)^(m-k) with
/// tangential coefficient symbols D_k(x, t, xi), D_0 = identity.
class CollarOperator {
  public:
    CollarOperator() = default;

    CollarOperator(int order, std::vector<MatrixSymbol> coefficients,
                   std::optional<MatrixSymbol> interior = std::nullopt)
        : order_(order), coeffs_(std::move(coefficients)), interior_(std::move(interior)) {
        if (static_cast<int>(coeffs_.size()) != order_ + 1)
            throw ShapeError("collar operator needs order+1 coefficient symbols");
        rank_ = coeffs_[0].rows();
        for (const auto& c : coeffs_)
            if (c.rows() != rank_ || c.cols() != rank_)
                throw ShapeError("collar coefficients must be square of equal rank");
        normalize();
    }

    int order() const { return order_; }
    int rank() const { return rank_; }
    int jet_dimension() const { return order_ * rank_; }
    const std::vector<MatrixSymbol>& coefficients() const { return coeffs_; }
    const std::optional<MatrixSymbol>& interior_symbol() const { return interior_; }

    /// Frozen coefficient matrices A_0..A_m at (x, t, xi).
    std::vector<Matrix> freeze(double x, double t, double xi) const {
        std::vector<Matrix> a;
        a.reserve(coeffs_.size());
        for (const auto& c : coeffs_) a.push_back(c.eval(x, t, xi, 0.0));
        return a;
    }

    /// Full principal symbol sum A_k(x,t,xi) lam^(m-k).
    Matrix symbol(double x, double t, double xi, Complex lam) const {
        Matrix s = Matrix::Zero(rank_, rank_);
        Complex p = 1.0;
        for (int k = order_; k >= 0; --k) {
            s += coeffs_[k].eval(x, t, xi, lam) * p;
            p *= lam;
        }
        return s;
    }

    /// Operator seen from the opposite boundary component: t -> 1-t and
    /// lam -> -lam, then renormalized to leading identity.  The coefficient
    /// of order k picks up a factor (-1)^k.
    CollarOperator reflected() const {
        std::vector<MatrixSymbol> rc;
        rc.reserve(coeffs_.size());
        for (int k = 0; k <= order_; ++k) {
            MatrixSymbol c = coeffs_[k];
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            rc.emplace_back(c.rows(), c.cols(), c.degree(), [c, sign](const EvalPoint& p) {
                EvalPoint q = p;
                q.t = 1.0 - q.t;
                return Matrix(sign * c.eval(q));
            });
        }
        return CollarOperator(order_, std::move(rc), interior_);
    }

    static CollarOperator block_diag(const CollarOperator& a, const CollarOperator& b) {
        if (a.order_ != b.order_)
            throw IncompatibleSumError("direct sum of collar operators of different order");
        std::vector<MatrixSymbol> coeffs;
        coeffs.reserve(a.coeffs_.size());
        for (size_t k = 0; k < a.coeffs_.size(); ++k)
            coeffs.push_back(MatrixSymbol::block_diag(a.coeffs_[k], b.coeffs_[k]));
        std::optional<MatrixSymbol> interior;
        if (a.interior_ && b.interior_)
            interior = MatrixSymbol::block_diag(*a.interior_, *b.interior_);
        return CollarOperator(a.order_, std::move(coeffs), std::move(interior));
    }

  private:
    // Enforce D_0 = identity; a non-identity leading coefficient is absorbed
    // by left-multiplying all coefficients with its inverse.
    void normalize() {
        Matrix d0 = coeffs_[0].eval(0.1, 0.0, 1.0, 0.0);
        if ((d0 - Matrix::Identity(rank_, rank_)).norm() < 1e-13) {
            coeffs_[0] = MatrixSymbol::identity(rank_);
            return;
        }
        MatrixSymbol lead = coeffs_[0];
        for (int k = 1; k <= order_; ++k) {
            MatrixSymbol c = coeffs_[k];
            coeffs_[k] = MatrixSymbol(c.rows(), c.cols(), c.degree(),
                                      [lead, c](const EvalPoint& p) {
                                          Matrix l = lead.eval(p);
                                          if (std::abs(l.determinant()) < 1e-14)
                                              throw NormalizationError(
                                                  "leading coefficient not invertible");
                                          return Matrix(l.inverse() * c.eval(p));
                                      });
        }
        coeffs_[0] = MatrixSymbol::identity(rank_);
    }

    int order_ = 0;
    int rank_ = 0;
    std::vector<MatrixSymbol> coeffs_;
    std::optional<MatrixSymbol> interior_;
};

/// Boundary condition: jet coefficients B_0..B_(m-1) on (x, xi) and the rank
/// of the target bundle G.
struct BoundaryCondition {
    std::vector<MatrixSymbol> jets;
    int target_rank = 0;

    BoundaryCondition() = default;
    BoundaryCondition(std::vector<MatrixSymbol> j, int target) : jets(std::move(j)), target_rank(target) {
        for (const auto& b : jets)
            if (b.rows() != target)
                throw ShapeError("jet coefficient rows must equal the target rank");
    }

    int order() const { return static_cast<int>(jets.size()); }

    /// Full jet-row matrix [B_0 B_1 ... B_(m-1)] of shape target x (m*n).
    Matrix jet_row(double x, double xi) const {
        const int n = jets.empty() ? 0 : jets[0].cols();
        Matrix row(target_rank, static_cast<int>(jets.size()) * n);
        for (size_t k = 0; k < jets.size(); ++k)
            row.middleCols(static_cast<int>(k) * n, n) = jets[k].eval(x, 0.0, xi, 0.0);
        return row;
    }

    static BoundaryCondition block_diag(const BoundaryCondition& a, const BoundaryCondition& b) {
        if (a.jets.size() != b.jets.size())
            throw IncompatibleSumError("direct sum of conditions of different jet order");
        std::vector<MatrixSymbol> jets;
        jets.reserve(a.jets.size());
        for (size_t k = 0; k < a.jets.size(); ++k)
            jets.push_back(MatrixSymbol::block_diag(a.jets[k], b.jets[k]));
        return BoundaryCondition(std::move(jets), a.target_rank + b.target_rank);
    }
};

/// Idempotent symbol on the cosphere of the boundary, with parity flags.
struct ProjectionSymbol {
    MatrixSymbol symbol;                 // n x n, degree 0
    bool pullback = false;               // independent of xi

    bool valid() const { return symbol.valid(); }
};

struct BvpProblem {
    ModelManifold manifold;
    CollarOperator op;                                  // component-0 collar coordinates
    std::vector<BoundaryCondition> conditions;          // one per boundary component
    std::vector<std::optional<ProjectionSymbol>> projections;  // spectral case

    int components() const { return manifold.boundary_components(); }

    /// Collar operator as seen from component `c` in its inward coordinate.
    CollarOperator component_operator(int c) const { return c == 0 ? op : op.reflected(); }

    const BoundaryCondition& condition(int c) const { return conditions.at(c); }

    bool is_spectral(int c) const {
        return c < static_cast<int>(projections.size()) && projections[c].has_value();
    }
};

inline BvpProblem direct_sum(const BvpProblem& a, const BvpProblem& b) {
    if (a.manifold.kind != b.manifold.kind)
        throw IncompatibleSumError("direct sum across different manifolds");
    if (a.op.order() != b.op.order())
        throw IncompatibleSumError("direct sum across different operator orders");
    if (a.op.rank() == 0) return b;
    if (b.op.rank() == 0) return a;
    BvpProblem s;
    s.manifold = a.manifold;
    s.op = CollarOperator::block_diag(a.op, b.op);
    for (int c = 0; c < a.components(); ++c)
        s.conditions.push_back(BoundaryCondition::block_diag(a.condition(c), b.condition(c)));
    for (int c = 0; c < a.components(); ++c) {
        if (a.is_spectral(c) || b.is_spectral(c)) {
            // block-diagonal projection; a missing side contributes its
            // classical full target as an identity block
            MatrixSymbol pa = a.is_spectral(c) ? a.projections[c]->symbol
                                               : MatrixSymbol::identity(a.op.rank());
            MatrixSymbol pb = b.is_spectral(c) ? b.projections[c]->symbol
                                               : MatrixSymbol::identity(b.op.rank());
            ProjectionSymbol p;
            p.symbol = MatrixSymbol::block_diag(pa, pb);
            p.pullback = (a.is_spectral(c) ? a.projections[c]->pullback : true) &&
                         (b.is_spectral(c) ? b.projections[c]->pullback : true);
            s.projections.push_back(p);
        } else {
            s.projections.push_back(std::nullopt);
        }
    }
    return s;
}

enum class ModelKind { Dplus, Dminus, Dpm };

/// The model operators: first-order collar symbol
/// (lam + i|xi|) Id_{E+}  (+)  (-lam + i|xi|) Id_{E-},
/// normalized to leading identity, with the boundary condition selecting the
/// E- component at the first boundary and the E+ component at the second.
/// The interior symbol is the cutoff blend with the i|(xi,lam)| multiplier.
inline BvpProblem make_model_operator(ModelKind kind, int rank_plus, int rank_minus,
                                      const ModelManifold& manifold) {
    if (kind == ModelKind::Dplus) rank_minus = 0;
    if (kind == ModelKind::Dminus) rank_plus = 0;
    if (rank_plus < 0 || rank_minus < 0 || rank_plus + rank_minus == 0)
        throw ShapeError("model operator needs a positive total rank");
    const int n = rank_plus + rank_minus;

    // normalized tangential coefficient: +i|xi| on E+, -i|xi| on E-
    std::vector<Expr> d1(static_cast<size_t>(n) * n, Expr(0.0));
    for (int k = 0; k < n; ++k) {
        Expr v = (k < rank_plus) ? Expr(Complex(0, 1)) * Expr::abs_xi()
                                 : -(Expr(Complex(0, 1)) * Expr::abs_xi());
        d1[static_cast<size_t>(k) * n + k] = v;
    }
    std::vector<MatrixSymbol> coeffs{MatrixSymbol::identity(n), MatrixSymbol(n, n, 1, d1)};

    // interior blend: chi(t) * collar symbol + (1 - chi(t)) * i|(xi,lam)|,
    // with the un-normalized block signs so the blend matches the collar form
    MatrixSymbol interior(n, n, 1, [n, rank_plus](const EvalPoint& p) {
        const double t = p.t;
        double chi = t <= 1.0 / 3.0 ? 1.0 : (t >= 2.0 / 3.0 ? 0.0 : (2.0 - 3.0 * t));
        Matrix m = Matrix::Zero(n, n);
        const double axi = std::abs(p.xi);
        const Complex norm = std::sqrt(Complex(p.xi * p.xi, 0.0) + p.lam * p.lam);
        for (int k = 0; k < n; ++k) {
            const Complex collar = (k < rank_plus) ? (p.lam + Complex(0, 1) * axi)
                                                   : (-p.lam + Complex(0, 1) * axi);
            m(k, k) = chi * collar + (1.0 - chi) * Complex(0, 1) * norm;
        }
        return m;
    });

    BvpProblem prob;
    prob.manifold = manifold;
    prob.op = CollarOperator(1, std::move(coeffs), std::move(interior));

    // component 0: select u_-; component 1 (reflected roles): select u_+
    Matrix sel_minus = Matrix::Zero(rank_minus, n);
    for (int k = 0; k < rank_minus; ++k) sel_minus(k, rank_plus + k) = 1.0;
    Matrix sel_plus = Matrix::Zero(rank_plus, n);
    for (int k = 0; k < rank_plus; ++k) sel_plus(k, k) = 1.0;

    prob.conditions.push_back(
        BoundaryCondition({MatrixSymbol::constant(sel_minus)}, rank_minus));
    prob.projections.push_back(std::nullopt);
    if (manifold.boundary_components() > 1) {
        prob.conditions.push_back(
            BoundaryCondition({MatrixSymbol::constant(sel_plus)}, rank_plus));
        prob.projections.push_back(std::nullopt);
    }
    return prob;
}

struct InteriorEllipticityReport {
    double min_abs_det = 0.0;
    double min_singular_value = 0.0;
    bool elliptic = false;
    std::string grid;
};

/// Minimum of |det sigma| over the manifold grid and the unit covector
/// sphere; elliptic iff above tolerance.
inline InteriorEllipticityReport check_interior_ellipticity(const CollarOperator& op,
                                                            const SampleGrid& grid = {},
                                                            double tol = 1e-8) {
    InteriorEllipticityReport rep;
    rep.grid = grid.describe();
    rep.min_abs_det = std::numeric_limits<double>::infinity();
    rep.min_singular_value = std::numeric_limits<double>::infinity();
    for (int ix = 0; ix < grid.nx; ++ix) {
        const double x = 2.0 * M_PI * ix / grid.nx;
        for (int it = 0; it < grid.nt; ++it) {
            const double t = static_cast<double>(it) / std::max(1, grid.nt - 1);
            for (int is = 0; is < grid.nsphere; ++is) {
                const double th = 2.0 * M_PI * is / grid.nsphere;
                const double xi = std::cos(th);
                const double lam = std::sin(th);
                Matrix s = op.symbol(x, t, xi, lam);
                if (s.rows() != s.cols()) throw ShapeError("interior symbol must be square");
                rep.min_abs_det = std::min(rep.min_abs_det, std::abs(s.determinant()));
                rep.min_singular_value = std::min(rep.min_singular_value, min_singular_value(s));
                if (op.interior_symbol()) {
                    Matrix si = op.interior_symbol()->eval(x, t, xi, Complex(lam));
                    rep.min_abs_det = std::min(rep.min_abs_det, std::abs(si.determinant()));
                    rep.min_singular_value =
                        std::min(rep.min_singular_value, min_singular_value(si));
                }
            }
        }
    }
    rep.elliptic = rep.min_abs_det > tol;
    return rep;
}

}  // namespace bvp
