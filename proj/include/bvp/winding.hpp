#pragma once

// Topological side of the index computations: winding numbers of invertible
// matrix loops on the circle, the cobordism pairing of two boundary symbols,
// excision comparisons of problems sharing an interior operator, and the
// defect-formula verification
//   ind(D, P) = 1/2 ind(D + alpha-double) - sum_c d(Im P_c).

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bvp/boundary.hpp"
#include "bvp/discretize.hpp"
#include "bvp/spectral.hpp"

namespace bvp {

using MatrixLoop = std::function<Matrix(double)>;

/// Winding number of det(loop) around the origin, by accumulated argument.
/// Samples are doubled until each step turns by less than pi/2 and two
/// consecutive sample counts agree.
inline int circle_winding_index(const MatrixLoop& loop, int samples = 256, double tol = 1e-8) {
    auto wind_at = [&](int ns) -> std::optional<int> {
        std::vector<Complex> dets(ns + 1);
        double min_abs = std::numeric_limits<double>::infinity();
        double max_abs = 0.0;
        for (int k = 0; k <= ns; ++k) {
            dets[k] = loop(2.0 * M_PI * k / ns).determinant();
            min_abs = std::min(min_abs, std::abs(dets[k]));
            max_abs = std::max(max_abs, std::abs(dets[k]));
        }
        if (min_abs <= tol * std::max(1.0, max_abs))
            throw ToleranceError("loop determinant too close to zero for a winding number");
        double total = 0.0;
        for (int k = 0; k < ns; ++k) {
            const double step = std::arg(dets[k + 1] / dets[k]);
            if (std::abs(step) >= M_PI / 2) return std::nullopt;
            total += step;
        }
        return static_cast<int>(std::lround(total / (2.0 * M_PI)));
    };
    std::optional<int> prev;
    for (int ns = std::max(8, samples); ns <= (1 << 16); ns *= 2) {
        std::optional<int> w = wind_at(ns);
        if (w && prev && *w == *prev) return *w;
        prev = w;
    }
    throw ToleranceError("winding number did not stabilize under sample doubling");
}

inline int circle_winding_index(const MatrixSymbol& sym, double xi = 1.0, int samples = 256,
                                double tol = 1e-8) {
    return circle_winding_index(
        [&](double x) { return sym.eval(x, 0.0, xi, 0.0); }, samples, tol);
}

/// Rectangular Toeplitz-style index oracle for the paired circle operator
/// a_plus on nonnegative modes, a_minus on negative modes.  Columns run over
/// modes -N..N; rows over the contiguous hull of the image support, so that
/// missed low modes are witnessed as cokernel instead of being truncated away.
inline long long paired_toeplitz_index(const MatrixLoop& a_plus, const MatrixLoop& a_minus,
                                       int nmodes = 24, const Tolerances& tol = {}) {
    const int fiber = static_cast<int>(a_plus(0.0).rows());
    const int band = nmodes;  // generous band; trig-polynomial symbols decay fast
    const int quad = std::max(64, 8 * nmodes + 16);
    auto coeffs = [&](const MatrixLoop& a) {
        std::vector<Matrix> c(2 * band + 1, Matrix::Zero(fiber, fiber));
        for (int q = 0; q < quad; ++q) {
            const double x = 2.0 * M_PI * q / quad;
            Matrix v = a(x);
            for (int k = -band; k <= band; ++k)
                c[k + band] += v * std::exp(Complex(0.0, -k * x)) / static_cast<double>(quad);
        }
        return c;
    };
    std::vector<Matrix> cp = coeffs(a_plus), cm = coeffs(a_minus);
    const double drop = 1e-12;
    int rmin = 0, rmax = 0;
    for (int col = -nmodes; col <= nmodes; ++col) {
        const std::vector<Matrix>& c = (col >= 0) ? cp : cm;
        for (int k = -band; k <= band; ++k) {
            if (c[k + band].norm() < drop) continue;
            rmin = std::min(rmin, col + k);
            rmax = std::max(rmax, col + k);
        }
    }
    const int ncols = 2 * nmodes + 1;
    const int nrows = rmax - rmin + 1;
    Matrix m = Matrix::Zero(nrows * fiber, ncols * fiber);
    for (int col = -nmodes; col <= nmodes; ++col) {
        const std::vector<Matrix>& c = (col >= 0) ? cp : cm;
        for (int k = -band; k <= band; ++k) {
            if (c[k + band].norm() < drop) continue;
            const int row = col + k;
            m.block((row - rmin) * fiber, (col + nmodes) * fiber, fiber, fiber) += c[k + band];
        }
    }
    Eigen::BDCSVD<Matrix> svd(m);
    const Eigen::VectorXd sv = svd.singularValues();
    const double thresh = tol.rank * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    int rank = 0;
    for (int k = 0; k < sv.size(); ++k)
        if (sv(k) > thresh) ++rank;
    return static_cast<long long>(m.cols() - rank) - static_cast<long long>(m.rows() - rank);
}

struct CobordismReport {
    int wind_plus = 0;
    int wind_minus = 0;
    long long index = 0;  // index of the paired circle operator
    bool extendable_claimed = false;
    bool consistent = true;
    std::string verdict;
};

/// Index of the paired circle operator of two boundary symbols.  Convention:
/// index = wind(a_minus) - wind(a_plus); the orientation is frozen against
/// the rectangular Toeplitz oracle above.  A pair restricted from a symbol
/// that extends over the bounding surface has equal windings, hence index 0.
inline CobordismReport cobordism_check(const MatrixLoop& a_plus, const MatrixLoop& a_minus,
                                       bool extendable_claimed = false, int samples = 256,
                                       double tol = 1e-8) {
    CobordismReport rep;
    rep.wind_plus = circle_winding_index(a_plus, samples, tol);
    rep.wind_minus = circle_winding_index(a_minus, samples, tol);
    rep.index = rep.wind_minus - rep.wind_plus;
    rep.extendable_claimed = extendable_claimed;
    rep.consistent = !extendable_claimed || rep.index == 0;
    rep.verdict = rep.consistent
                      ? (rep.index == 0 ? "cobordant pair, index 0"
                                        : "index " + std::to_string(rep.index))
                      : "claimed extendable but nonzero index";
    return rep;
}

struct ExcisionReport {
    std::vector<int> relative_windings;  // per circle component
    IndexReport first, second;
    bool windings_zero = true;
    bool equal = false;
    std::string verdict;
};

namespace detail {

inline bool same_operator(const CollarOperator& a, const CollarOperator& b, double tol = 1e-10) {
    if (a.order() != b.order() || a.rank() != b.rank()) return false;
    for (int k = 0; k <= a.order(); ++k)
        for (double x : {0.0, 1.3, 4.0})
            for (double t : {0.0, 0.35, 0.9})
                for (double xi : {1.0, -1.0, 2.0}) {
                    Matrix da = a.coefficients()[k].eval(x, t, xi, 0.0);
                    Matrix db = b.coefficients()[k].eval(x, t, xi, 0.0);
                    if ((da - db).norm() > tol * (1.0 + da.norm())) return false;
                }
    return true;
}

}  // namespace detail

/// Compare two problems sharing the interior operator.  The conditions are
/// compared by the relative winding of det(B2 F) / det(B1 F) along each
/// circle component (F a frame of L+; the frame phase cancels in the ratio).
/// Zero relative winding on every component predicts equal indices.
inline ExcisionReport verify_excision(const BvpProblem& p1, const BvpProblem& p2,
                                      std::vector<int> resolutions = {12, 16},
                                      const DiscretizeOptions& opt1 = {},
                                      const DiscretizeOptions& opt2 = {},
                                      const Tolerances& tol = {}) {
    if (!detail::same_operator(p1.op, p2.op))
        throw CapabilityError("excision comparison requires a common interior operator");
    if (p1.components() != p2.components())
        throw CapabilityError("excision comparison requires matching boundary components");
    ExcisionReport rep;
    if (p1.manifold.component_kind() == BoundaryComponentKind::Circle) {
        for (int c = 0; c < p1.components(); ++c) {
            if (p1.is_spectral(c) || p2.is_spectral(c)) continue;
            CollarOperator op = p1.component_operator(c);
            const BoundaryCondition& b1 = p1.condition(c);
            const BoundaryCondition& b2 = p2.condition(c);
            if (b1.target_rank != b2.target_rank)
                throw CapabilityError("conditions of different target rank are incomparable");
            auto ratio = [&](double x) {
                auto [fp, fm] = bounded_subspaces(companion_matrix(op, x, 1.0), tol.root, x, 1.0);
                Complex d1 = boundary_symbol_matrix(b1, fp).determinant();
                Complex d2 = boundary_symbol_matrix(b2, fp).determinant();
                return (Matrix(1, 1) << d2 / d1).finished();
            };
            rep.relative_windings.push_back(circle_winding_index(ratio, 64, tol.sl));
        }
    }
    for (int w : rep.relative_windings) rep.windings_zero = rep.windings_zero && (w == 0);
    rep.first = numeric_index(p1, resolutions, opt1, tol);
    rep.second = numeric_index(p2, resolutions, opt2, tol);
    rep.equal = rep.first.stable && rep.second.stable && rep.first.index == rep.second.index;
    rep.verdict = rep.equal ? "equal indices" : "indices differ";
    if (!rep.windings_zero) rep.verdict += " (nonzero relative winding)";
    return rep;
}

/// Per-mode projection fiber: mode n -> projection on the condition target.
using ModeProjectionFn = std::function<Matrix(int mode)>;

struct Formula35Report {
    long long lhs_index = 0;
    long long double_index = 0;
    std::vector<DyadicRational> d_values;
    DyadicRational lhs, rhs;
    bool equal = false;
    IndexReport lhs_report, double_report;
    std::string verdict;
};

namespace detail {

inline DiscretizeOptions spectral_lhs_options(const BvpProblem& problem,
                                              const std::map<int, ModeProjectionFn>& projections) {
    DiscretizeOptions opt;
    for (const auto& [c, gen] : projections) {
        const BoundaryCondition cond = problem.condition(c);
        opt.condition_rows_mode[c] = [gen, cond](int n, int) {
            Matrix p = gen(n);
            Matrix basis = canonical_frame(
                invariant_subspace(p, [](Complex z) { return std::abs(z - 1.0) < 0.5; }));
            return Matrix(basis.adjoint() * (p * cond.jet_row(0.0, static_cast<double>(n))));
        };
    }
    return opt;
}

inline DiscreteProjection assemble_projection(const BvpProblem& problem, int component,
                                              const ModeProjectionFn& gen, int nmodes) {
    const int g = problem.condition(component).target_rank;
    Matrix p = Matrix::Zero((2 * nmodes + 1) * g, (2 * nmodes + 1) * g);
    for (int n = -nmodes; n <= nmodes; ++n)
        p.block((n + nmodes) * g, (n + nmodes) * g, g, g) = gen(n);
    DiscreteProjection out;
    out.p = std::move(p);
    out.nmodes = nmodes;
    out.fiber = g;
    out.symbol = *problem.projections[component];
    return out;
}

}  // namespace detail

/// Verify the defect formula on a spectral problem over circle boundaries.
/// `projections` supplies the actual (possibly finite-rank-modified) per-mode
/// projection fibers for each spectral component; components left out use the
/// spectral rounding of their declared symbol.
inline Formula35Report verify_index_formula_35(const BvpProblem& problem,
                                               std::map<int, ModeProjectionFn> projections = {},
                                               std::vector<int> resolutions = {16, 32},
                                               const Tolerances& tol = {}) {
    if (problem.manifold.component_kind() != BoundaryComponentKind::Circle)
        throw CapabilityError("defect-formula verification needs circle boundaries");
    // default: canonical spectral rounding of the declared symbol
    for (int c = 0; c < problem.components(); ++c) {
        if (!problem.is_spectral(c))
            throw AdmissibilityError("defect formula applies to spectral conditions");
        if (projections.count(c)) continue;
        MatrixSymbol psym = problem.projections[c]->symbol;
        projections[c] = [psym](int n) {
            Matrix v = psym.eval(0.0, 0.0, static_cast<double>(n), 0.0);
            return Matrix(spectral_projector(v, [](Complex z) { return z.real() > 0.5; }));
        };
    }

    Formula35Report rep;
    rep.lhs_report =
        numeric_index(problem, resolutions, detail::spectral_lhs_options(problem, projections), tol);
    if (!rep.lhs_report.stable) throw NumericalInconsistencyError(rep.lhs_report.verdict);
    rep.lhs_index = rep.lhs_report.index;

    BvpProblem doubled = double_even(problem);
    DiscretizeOptions dopt;
    const int nf = problem.op.rank();
    for (int c = 0; c < doubled.components(); ++c) {
        ModeProjectionFn gen = projections.at(c);
        dopt.condition_rows_mode[c] = [gen, nf](int n, int) {
            Matrix p = gen(n);
            Matrix rows(p.rows(), 2 * nf);
            rows << p, Matrix::Identity(p.rows(), p.cols()) - p;
            return rows;
        };
    }
    rep.double_report = numeric_index(doubled, resolutions, dopt, tol);
    if (!rep.double_report.stable) throw NumericalInconsistencyError(rep.double_report.verdict);
    rep.double_index = rep.double_report.index;

    const int nm = detail::mode_range(resolutions.back());
    DyadicRational dsum = DyadicRational::integer(0);
    for (const auto& [c, gen] : projections) {
        DiscreteProjection p = detail::assemble_projection(problem, c, gen, nm);
        DyadicRational d = d_value(p, tol.rank);
        rep.d_values.push_back(d);
        dsum = dsum + d;
    }

    rep.lhs = DyadicRational::integer(rep.lhs_index);
    rep.rhs = DyadicRational::integer(rep.double_index).half() - dsum;
    rep.equal = rep.lhs == rep.rhs;
    rep.verdict = rep.equal ? "defect formula holds exactly"
                            : "defect formula mismatch: " + rep.lhs.str() + " vs " + rep.rhs.str();
    return rep;
}

}  // namespace bvp
