#pragma once

// Spectral boundary value machinery on the circle: Fourier discretization of
// first-order tangential operators, spectral projections onto the
// nonnegative-real-part subspace, projection parity, the relative index of
// projections with equal symbols, the dyadic-valued d functional, and the
// even/odd doubled problems.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "bvp/boundary.hpp"
#include "bvp/matrix_util.hpp"
#include "bvp/operators.hpp"

namespace bvp {

/// Exact element of Z[1/2], kept in canonical form (odd numerator or zero).
struct DyadicRational {
    long long num = 0;
    int exp = 0;  // value = num / 2^exp

    DyadicRational() = default;
    DyadicRational(long long n, int e) : num(n), exp(e) { canonicalize(); }
    static DyadicRational integer(long long n) { return DyadicRational(n, 0); }

    void canonicalize() {
        if (num == 0) {
            exp = 0;
            return;
        }
        while (exp > 0 && num % 2 == 0) {
            num /= 2;
            --exp;
        }
    }

    DyadicRational half() const { return DyadicRational(num, exp + 1); }

    friend DyadicRational operator+(DyadicRational a, DyadicRational b) {
        int e = std::max(a.exp, b.exp);
        return DyadicRational((a.num << (e - a.exp)) + (b.num << (e - b.exp)), e);
    }
    friend DyadicRational operator-(DyadicRational a, DyadicRational b) {
        int e = std::max(a.exp, b.exp);
        return DyadicRational((a.num << (e - a.exp)) - (b.num << (e - b.exp)), e);
    }
    friend DyadicRational operator-(DyadicRational a) { return DyadicRational(-a.num, a.exp); }
    friend bool operator==(DyadicRational a, DyadicRational b) {
        return a.num == b.num && a.exp == b.exp;
    }
    double value() const { return static_cast<double>(num) / std::ldexp(1.0, exp); }
    std::string str() const {
        if (exp == 0) return std::to_string(num);
        return std::to_string(num) + "/2^" + std::to_string(exp);
    }
};

inline int mode_count(int nmodes) { return 2 * nmodes + 1; }

/// Flat index of (Fourier mode n, fiber component j).
inline int mode_index(int n, int j, int nmodes, int fiber) { return (n + nmodes) * fiber + j; }

namespace detail {

// Fourier coefficients of x -> a(x, t, xi_col) by trapezoid quadrature
// (exact for finite Fourier sums of bandwidth < quad - needed band).
inline std::vector<Matrix> fourier_coefficients(const MatrixSymbol& a, double t, double xi_col,
                                                int band, int quad) {
    std::vector<Matrix> out(2 * band + 1, Matrix::Zero(a.rows(), a.cols()));
    for (int j = 0; j < quad; ++j) {
        const double x = 2.0 * M_PI * j / quad;
        Matrix v = a.eval(x, t, xi_col, 0.0);
        for (int k = -band; k <= band; ++k)
            out[k + band] += v * std::exp(Complex(0.0, -k * x)) / static_cast<double>(quad);
    }
    return out;
}

inline void check_first_order_in_xi(const MatrixSymbol& a) {
    for (double x : {0.3, 1.7, 4.1}) {
        for (double sgn : {1.0, -1.0}) {
            Matrix d2 = a.eval(x, 0.0, 3.0 * sgn, 0.0) - 2.0 * a.eval(x, 0.0, 2.0 * sgn, 0.0) +
                        a.eval(x, 0.0, 1.0 * sgn, 0.0);
            if (d2.norm() > 1e-9 * (1.0 + a.eval(x, 0.0, sgn, 0.0).norm()))
                throw OrderError("tangential symbol is not of degree <= 1 in xi");
        }
    }
}

}  // namespace detail

/// Fourier-collocation matrix of a first-order tangential symbol A(x, xi) on
/// modes |n| <= N, left quantization xi -> n, |xi| -> |n|.
inline Matrix discretize_circle_op(const MatrixSymbol& a, int nmodes, double t = 0.0) {
    detail::check_first_order_in_xi(a);
    const int fiber = a.rows();
    if (a.cols() != fiber) throw ShapeError("tangential symbol must be square");
    const int dim = mode_count(nmodes) * fiber;
    const int band = 2 * nmodes;  // representable coupling range
    const int quad = std::max(64, 8 * nmodes + 16);
    Matrix op = Matrix::Zero(dim, dim);
    for (int ncol = -nmodes; ncol <= nmodes; ++ncol) {
        std::vector<Matrix> coef =
            detail::fourier_coefficients(a, t, static_cast<double>(ncol), band, quad);
        for (int mrow = -nmodes; mrow <= nmodes; ++mrow) {
            const Matrix& block = coef[(mrow - ncol) + band];
            op.block(mode_index(mrow, 0, nmodes, fiber), mode_index(ncol, 0, nmodes, fiber),
                     fiber, fiber) = block;
        }
    }
    return op;
}

/// Discrete projection with its declared symbol and a modification ledger.
struct DiscreteProjection {
    Matrix p;
    int nmodes = 0;
    int fiber = 1;
    ProjectionSymbol symbol;
    std::vector<std::string> ledger;

    int dim() const { return static_cast<int>(p.rows()); }
    int rank() const { return static_cast<int>(std::lround(p.trace().real())); }
    double idempotency_residual() const { return (p * p - p).norm(); }

    /// Orthonormal basis of the range.
    Matrix range_basis() const {
        return canonical_frame(
            invariant_subspace(p, [](Complex z) { return std::abs(z - 1.0) < 0.5; }));
    }
};

/// Spectral projection onto the invariant subspace for eigenvalues with
/// nonnegative real part, along the complementary invariant subspace.
/// Eigenvalues within `zero_tol` of the imaginary axis count as zero modes
/// and land on the plus side; eigenvalues between `zero_tol` and `cut_tol`
/// raise a spectral-cut error.
inline DiscreteProjection spectral_projection(const Matrix& a_disc, int nmodes, int fiber,
                                              const ProjectionSymbol& declared,
                                              double cut_tol = 1e-8, double zero_tol = 1e-10) {
    for (Complex ev : eigenvalues_of(a_disc)) {
        const double re = std::abs(ev.real());
        if (re > zero_tol && re < cut_tol)
            throw SpectralCutError("eigenvalue too close to the spectral cut", ev);
    }
    auto plus = [zero_tol](Complex z) { return z.real() > -zero_tol; };
    DiscreteProjection dp;
    dp.p = spectral_projector(a_disc, plus);
    dp.nmodes = nmodes;
    dp.fiber = fiber;
    dp.symbol = declared;
    return dp;
}

/// Declared symbol of the spectral projection of a first-order tangential
/// operator: the nonnegative spectral projector of sigma(A) pointwise.
inline ProjectionSymbol plus_symbol_of(const MatrixSymbol& a_sym) {
    MatrixSymbol asym = a_sym;
    ProjectionSymbol p;
    p.symbol = MatrixSymbol(a_sym.rows(), a_sym.cols(), 0, [asym](const EvalPoint& pt) {
        Matrix a = asym.eval(pt);
        return spectral_projector(a, [](Complex z) { return z.real() > 0.0; });
    });
    return p;
}

/// Tangential operator A of a first-order collar operator: the collar form is
/// -i(d/dt + A), so sigma(A) = i * sigma(D_1).
inline MatrixSymbol tangential_operator_symbol(const CollarOperator& op) {
    if (op.order() != 1) throw OrderError("tangential operator defined for first-order operators");
    return op.coefficients()[1].scaled(Complex(0.0, 1.0));
}

enum class Parity { Even, Odd, Neither };

inline Parity parity_classify(const MatrixSymbol& psym, int nx = 16, double tol = 1e-10) {
    bool even = true, odd = true;
    const Matrix id = Matrix::Identity(psym.rows(), psym.cols());
    for (int k = 0; k < nx; ++k) {
        const double x = 2.0 * M_PI * k / nx;
        Matrix pp = psym.eval(x, 0.0, 1.0, 0.0);
        Matrix pm = psym.eval(x, 0.0, -1.0, 0.0);
        if ((pp * pp - pp).norm() > 1e-10) throw AdmissibilityError("symbol is not idempotent");
        if ((pp - pm).norm() > tol) even = false;
        if ((pp + pm - id).norm() > tol) odd = false;
    }
    if (even) return Parity::Even;
    if (odd) return Parity::Odd;
    return Parity::Neither;
}

inline Parity parity_classify(const ProjectionSymbol& p, int nx = 16, double tol = 1e-10) {
    return parity_classify(p.symbol, nx, tol);
}

/// Canonical quantization of a pullback (xi-independent) projection symbol:
/// the Fourier multiplication operator, spectrally rounded to an exact
/// projection.
inline DiscreteProjection canonical_quantization(const ProjectionSymbol& psym, int nmodes) {
    const int fiber = psym.symbol.rows();
    for (double x : {0.0, 1.3, 2.9}) {
        Matrix pp = psym.symbol.eval(x, 0.0, 1.0, 0.0);
        Matrix pm = psym.symbol.eval(x, 0.0, -1.0, 0.0);
        if ((pp - pm).norm() > 1e-10)
            throw AdmissibilityError(
                "no canonical quantization: projection symbol is not a pullback");
    }
    Matrix mult = discretize_circle_op(psym.symbol, nmodes);
    DiscreteProjection dp;
    dp.p = spectral_projector(mult, [](Complex z) { return z.real() > 0.5; });
    dp.nmodes = nmodes;
    dp.fiber = fiber;
    dp.symbol = psym;
    dp.symbol.pullback = true;
    return dp;
}

struct RelativeIndexResult {
    long long index = 0;
    long long trace_method = 0;
    long long svd_method = 0;
    int dim_ker = 0;
    int dim_coker = 0;
};

/// Fredholm index of P2 : Im P1 -> Im P2 for projections with equal declared
/// symbols, computed by the trace of (P1 - P2) and by an SVD kernel/cokernel
/// count of the restricted map; both must agree.
inline RelativeIndexResult relative_index_detailed(const DiscreteProjection& p1,
                                                   const DiscreteProjection& p2,
                                                   double tol = 1e-8) {
    if (p1.dim() != p2.dim()) throw ShapeError("projections act on different spaces");
    if (p1.symbol.valid() && p2.symbol.valid()) {
        for (double x : {0.4, 2.2}) {
            for (double xi : {1.0, -1.0}) {
                Matrix d = p1.symbol.symbol.eval(x, 0.0, xi, 0.0) -
                           p2.symbol.symbol.eval(x, 0.0, xi, 0.0);
                if (d.norm() > 1e-8)
                    throw Error("relative index requires equal principal symbols");
            }
        }
    }
    RelativeIndexResult r;
    const double tr = (p1.p - p2.p).trace().real();
    r.trace_method = std::llround(tr);
    if (std::abs(tr - static_cast<double>(r.trace_method)) > 1e-6)
        throw NumericalInconsistencyError("trace of projection difference is not near an integer");

    Matrix q1 = p1.range_basis();
    Matrix q2 = p2.range_basis();
    Matrix restricted = q2.adjoint() * (p2.p * q1);
    int rank = 0;
    if (restricted.size() > 0) {
        Eigen::JacobiSVD<Matrix> svd(restricted);
        const auto& sv = svd.singularValues();
        const double smax = sv.size() > 0 ? sv(0) : 0.0;
        for (int k = 0; k < sv.size(); ++k)
            if (sv(k) > tol * std::max(1.0, smax)) ++rank;
    }
    r.dim_ker = static_cast<int>(q1.cols()) - rank;
    r.dim_coker = static_cast<int>(q2.cols()) - rank;
    r.svd_method = r.dim_ker - r.dim_coker;
    if (r.svd_method != r.trace_method)
        throw NumericalInconsistencyError("trace and SVD relative-index methods disagree: " +
                                          std::to_string(r.trace_method) + " vs " +
                                          std::to_string(r.svd_method));
    r.index = r.trace_method;
    return r;
}

inline long long relative_index(const DiscreteProjection& p1, const DiscreteProjection& p2,
                                double tol = 1e-8) {
    return relative_index_detailed(p1, p2, tol).index;
}

struct ProjectionMode {
    Vector vector;
    bool add = true;  // false: remove from the range
};

/// Finite-rank modification of an (orthogonal) discrete projection, with the
/// ledger updated.  Added modes must be orthogonal to the range, removed
/// modes must lie inside it.
inline DiscreteProjection finite_rank_modify(const DiscreteProjection& p,
                                             const std::vector<ProjectionMode>& modes,
                                             double tol = 1e-8) {
    DiscreteProjection out = p;
    for (const auto& m : modes) {
        if (m.vector.size() != out.dim()) throw ShapeError("mode vector has wrong dimension");
        if (m.add) {
            Vector w = m.vector - out.p * m.vector;
            if (w.norm() < tol) throw GeometryError("added mode lies inside the range");
            w.normalize();
            if ((out.p * w).norm() > tol || (out.p.adjoint() * w).norm() > tol)
                throw GeometryError("added mode is not orthogonal to the projection");
            out.p += w * w.adjoint();
            out.ledger.push_back("add mode");
        } else {
            Vector w = out.p * m.vector;
            if (w.norm() < tol) throw GeometryError("removed mode is not inside the range");
            w.normalize();
            if ((out.p * w - w).norm() > tol || (out.p.adjoint() * w - w).norm() > tol)
                throw GeometryError("removed mode is not an invariant direction");
            out.p -= w * w.adjoint();
            out.ledger.push_back("remove mode");
        }
        if (out.idempotency_residual() > 1e-10)
            throw NumericalInconsistencyError("modification broke idempotency");
    }
    return out;
}

/// Fourier basis mode as a vector, convenient for modification lists.
inline Vector fourier_mode(int n, int j, int nmodes, int fiber) {
    Vector v = Vector::Zero(mode_count(nmodes) * fiber);
    v(mode_index(n, j, nmodes, fiber)) = 1.0;
    return v;
}

/// The d functional on its admissible class: even (hence pullback on the
/// circle) symbol, finite-rank difference from the canonical quantization,
/// calibrated by d(P_sigma) = 0.
inline DyadicRational d_value(const DiscreteProjection& p, double tol = 1e-8) {
    if (!p.symbol.valid()) throw AdmissibilityError("projection carries no declared symbol");
    Parity parity = parity_classify(p.symbol);
    if (parity == Parity::Neither)
        throw AdmissibilityError("projection symbol has no parity");
    if (parity == Parity::Odd)
        throw AdmissibilityError(
            "odd projections on the circle are outside the admissible class of d");
    DiscreteProjection psigma = canonical_quantization(p.symbol, p.nmodes);
    return DyadicRational::integer(relative_index(p, psigma, tol));
}

/// First-order collar operator with principal symbol alpha^* sigma(D): for a
/// normalized first-order operator lam + a(x, xi) this is lam - a(x, -xi).
inline CollarOperator alpha_collar(const CollarOperator& op) {
    if (op.order() != 1) throw OrderError("alpha double is built for first-order operators");
    MatrixSymbol a = op.coefficients()[1];
    MatrixSymbol a_alpha = a.alpha().scaled(-1.0);  // -a(x,-xi); alpha also flips lam (unused)
    return CollarOperator(1, {MatrixSymbol::identity(op.rank()), a_alpha});
}

/// Flattened first-order representative of alpha^* D^{-1}: the operator with
/// L_+(x, xi) = L_+(D)(x, -xi), realized as -i|xi| (2 P(x,-xi) - 1) on the
/// spectral splitting of the tangential symbol.
inline CollarOperator alpha_inverse_collar(const CollarOperator& op) {
    if (op.order() != 1) throw OrderError("alpha-inverse double is built for first-order operators");
    MatrixSymbol a = op.coefficients()[1];
    const int n = op.rank();
    MatrixSymbol a_inv(n, n, 1, [a, n](const EvalPoint& pt) {
        Matrix am = a.eval(pt.x, 0.0, -pt.xi, 0.0);
        // L+ of lam + a is the invariant subspace of a for Im < 0
        Matrix proj = spectral_projector(am, [](Complex z) { return z.imag() < 0.0; });
        const double axi = std::abs(pt.xi);
        return Matrix(Complex(0.0, -1.0) * axi * (2.0 * proj - Matrix::Identity(n, n)));
    });
    return CollarOperator(1, {MatrixSymbol::identity(n), a_inv});
}

namespace detail {

inline BvpProblem make_double(const BvpProblem& problem, const CollarOperator& second,
                              Parity required) {
    BvpProblem out;
    out.manifold = problem.manifold;
    out.op = CollarOperator::block_diag(problem.op, second);
    const int n = problem.op.rank();
    for (int c = 0; c < problem.components(); ++c) {
        if (!problem.is_spectral(c))
            throw AdmissibilityError("doubling needs a spectral condition on every component");
        const ProjectionSymbol& ps = *problem.projections[c];
        if (parity_classify(ps) != required)
            throw AdmissibilityError("projection parity does not match the chosen doubling");
        MatrixSymbol p = ps.symbol;
        MatrixSymbol one_minus_p(n, n, 0, [p, n](const EvalPoint& pt) {
            return Matrix(Matrix::Identity(n, n) - p.eval(pt));
        });
        // condition P u|_X + (1 - P) v|_X = g, target rank n
        out.conditions.push_back(
            BoundaryCondition({MatrixSymbol::hcat(p, one_minus_p)}, n));
        out.projections.push_back(std::nullopt);
    }
    return out;
}

}  // namespace detail

/// Classical doubled problem for D (+) alpha^* D with boundary condition
/// P u|_X + (1-P) v|_X = g (even case).
inline BvpProblem double_even(const BvpProblem& problem) {
    return detail::make_double(problem, alpha_collar(problem.op), Parity::Even);
}

/// Classical doubled problem for D (+) alpha^* D^{-1} (odd case, symbol level).
inline BvpProblem double_odd(const BvpProblem& problem) {
    return detail::make_double(problem, alpha_inverse_collar(problem.op), Parity::Odd);
}

/// The pair form of two spectral problems with complementary projections and
/// its folded classical packaging; the round trip is the identity.
struct OddPair {
    BvpProblem d1;  // condition P u = g1
    BvpProblem d2;  // condition (1-P) v = g2
};

inline BvpProblem fold_odd_pair(const OddPair& pair, double tol = 1e-10) {
    if (pair.d1.components() != pair.d2.components())
        throw Error("pair components mismatch");
    BvpProblem out;
    out.manifold = pair.d1.manifold;
    out.op = CollarOperator::block_diag(pair.d1.op, pair.d2.op);
    const int n = pair.d1.op.rank();
    for (int c = 0; c < pair.d1.components(); ++c) {
        if (!pair.d1.is_spectral(c) || !pair.d2.is_spectral(c))
            throw Error("pair folding needs spectral conditions");
        MatrixSymbol p = pair.d1.projections[c]->symbol;
        MatrixSymbol q = pair.d2.projections[c]->symbol;
        for (double x : {0.5, 2.5}) {
            for (double xi : {1.0, -1.0}) {
                Matrix sum = p.eval(x, 0, xi, 0) + q.eval(x, 0, xi, 0);
                if ((sum - Matrix::Identity(n, n)).norm() > tol)
                    throw Error("projections are not complementary");
            }
        }
        out.conditions.push_back(BoundaryCondition({MatrixSymbol::hcat(p, q)}, n));
        out.projections.push_back(std::nullopt);
    }
    return out;
}

inline OddPair unfold_odd_pair(const BvpProblem& folded,
                               const std::vector<ProjectionSymbol>& p_per_component) {
    OddPair pair;
    const int n2 = folded.op.rank();
    if (n2 % 2 != 0) throw ShapeError("folded problem must have even rank");
    const int n = n2 / 2;
    // split the block-diagonal operator back into its two halves
    auto half = [&](int which) {
        std::vector<MatrixSymbol> coeffs;
        for (const auto& c : folded.op.coefficients()) {
            MatrixSymbol cc = c;
            coeffs.emplace_back(n, n, c.degree(), [cc, which, n](const EvalPoint& p) {
                Matrix full = cc.eval(p);
                return Matrix(full.block(which * n, which * n, n, n));
            });
        }
        return CollarOperator(1, std::move(coeffs));
    };
    pair.d1.manifold = pair.d2.manifold = folded.manifold;
    pair.d1.op = half(0);
    pair.d2.op = half(1);
    for (int c = 0; c < folded.components(); ++c) {
        const ProjectionSymbol& p = p_per_component.at(c);
        MatrixSymbol psym = p.symbol;
        MatrixSymbol qsym(n, n, 0, [psym, n](const EvalPoint& pt) {
            return Matrix(Matrix::Identity(n, n) - psym.eval(pt));
        });
        pair.d1.conditions.push_back(BoundaryCondition({psym}, n));
        ProjectionSymbol ps1;
        ps1.symbol = psym;
        pair.d1.projections.push_back(ps1);
        pair.d2.conditions.push_back(BoundaryCondition({qsym}, n));
        ProjectionSymbol ps2;
        ps2.symbol = qsym;
        pair.d2.projections.push_back(ps2);
    }
    return pair;
}

}  // namespace bvp
