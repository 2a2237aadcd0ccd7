#pragma once

// Dense linear-algebra helpers shared by the boundary and spectral modules:
// ordered complex Schur decompositions, invariant-subspace frames in a
// deterministic canonical form, oblique spectral projectors, principal
// angles and polar factors.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bvp/errors.hpp"
#include "bvp/symbol.hpp"

namespace bvp {

struct SchurResult {
    Matrix q;  // unitary
    Matrix t;  // upper triangular, a = q t q^H
};

inline SchurResult complex_schur(const Matrix& a) {
    Eigen::ComplexSchur<Matrix> schur(a, /*computeU=*/true);
    if (schur.info() != Eigen::Success) throw NumericalInconsistencyError("Schur iteration failed");
    return {schur.matrixU(), schur.matrixT()};
}

namespace detail {

// Swap the diagonal entries at positions p, p+1 of an upper triangular T by a
// unitary similarity, accumulating the transform into Q.  Standard Givens
// construction from the eigenvector of the trailing eigenvalue of the 2x2
// block.
inline void schur_swap(Matrix& t, Matrix& q, int p) {
    const Complex a = t(p, p), b = t(p + 1, p + 1), c = t(p, p + 1);
    const Complex v0 = c, v1 = b - a;
    const double n = std::sqrt(std::norm(v0) + std::norm(v1));
    if (n < 1e-300 || std::abs(v1) < 1e-300 * (1.0 + std::abs(c))) {
        // coincident eigenvalues: swapping is a no-op up to ordering
        if (std::abs(v1) < 1e-14 * (1.0 + std::abs(a) + std::abs(b))) return;
    }
    const Complex g0 = v0 / n, g1 = v1 / n;
    // G has first column (g0, g1); G^H * block * G swaps the diagonal.
    Eigen::Matrix2cd g;
    g << g0, -std::conj(g1), g1, std::conj(g0);
    const int m = static_cast<int>(t.rows());
    t.block(0, p, p + 2, 2) = t.block(0, p, p + 2, 2) * g;
    t.block(p, p, 2, m - p) = g.adjoint() * t.block(p, p, 2, m - p);
    q.middleCols(p, 2) = q.middleCols(p, 2) * g;
    t(p + 1, p) = 0.0;  // enforce triangularity
}

}  // namespace detail

/// Reorder a Schur decomposition so the eigenvalues sort ascending under
/// `less` (deterministic bubble sort of adjacent diagonal entries).
inline void schur_reorder(SchurResult& s,
                          const std::function<bool(Complex, Complex)>& less) {
    const int n = static_cast<int>(s.t.rows());
    for (int pass = 0; pass < n; ++pass) {
        bool swapped = false;
        for (int p = 0; p + 1 < n; ++p) {
            if (less(s.t(p + 1, p + 1), s.t(p, p))) {
                detail::schur_swap(s.t, s.q, p);
                swapped = true;
            }
        }
        if (!swapped) break;
    }
}

/// Eigenvalue comparator: selected group first, then by (Re, Im).
inline std::function<bool(Complex, Complex)> select_first(
    const std::function<bool(Complex)>& selected) {
    return [selected](Complex a, Complex b) {
        const bool sa = selected(a), sb = selected(b);
        if (sa != sb) return sa;
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    };
}

/// Orthonormal basis of the invariant subspace of `a` for the selected
/// eigenvalues (columns of Q after reordering).  Returns k columns.
inline Matrix invariant_subspace(const Matrix& a, const std::function<bool(Complex)>& selected) {
    SchurResult s = complex_schur(a);
    schur_reorder(s, select_first(selected));
    int k = 0;
    const int n = static_cast<int>(a.rows());
    for (int p = 0; p < n; ++p)
        if (selected(s.t(p, p))) ++k;
    return s.q.leftCols(k);
}

inline std::vector<Complex> eigenvalues_of(const Matrix& a) {
    Eigen::ComplexEigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
    std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
    std::sort(ev.begin(), ev.end(), [](Complex u, Complex v) {
        if (u.real() != v.real()) return u.real() < v.real();
        return u.imag() < v.imag();
    });
    return ev;
}

/// Deterministic canonical orthonormal basis of the column span of `basis`:
/// built from the orthogonal projector (so independent of the input basis),
/// then phase-fixed column by column.
inline Matrix canonical_frame(const Matrix& basis) {
    const int n = static_cast<int>(basis.rows());
    const int k = static_cast<int>(basis.cols());
    if (k == 0) return Matrix(n, 0);
    Matrix proj = basis * basis.adjoint();
    Eigen::ColPivHouseholderQR<Matrix> qr(proj);
    Matrix q = qr.householderQ() * Matrix::Identity(n, k);
    // phase fix: largest-magnitude entry of each column made real positive
    for (int c = 0; c < k; ++c) {
        int imax = 0;
        double best = 0.0;
        for (int r = 0; r < n; ++r) {
            if (std::abs(q(r, c)) > best) {
                best = std::abs(q(r, c));
                imax = r;
            }
        }
        Complex ph = q(imax, c) / best;
        q.col(c) *= std::conj(ph);
    }
    return q;
}

/// Oblique projector onto the invariant subspace of the selected eigenvalues
/// along the complementary invariant subspace.
inline Matrix spectral_projector(const Matrix& a, const std::function<bool(Complex)>& selected) {
    const int n = static_cast<int>(a.rows());
    Matrix vplus = invariant_subspace(a, selected);
    Matrix vminus = invariant_subspace(a, [&](Complex z) { return !selected(z); });
    const int k = static_cast<int>(vplus.cols());
    if (k == 0) return Matrix::Zero(n, n);
    if (k == n) return Matrix::Identity(n, n);
    Matrix s(n, n);
    s.leftCols(k) = vplus;
    s.rightCols(n - k) = vminus;
    Matrix d = Matrix::Zero(n, n);
    d.topLeftCorner(k, k) = Matrix::Identity(k, k);
    return s * d * s.inverse();
}

/// Largest principal angle (radians) between the spans of two orthonormal
/// frames of equal rank.
inline double max_principal_angle(const Matrix& f, const Matrix& g) {
    if (f.cols() != g.cols()) return M_PI / 2.0;
    if (f.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(f.adjoint() * g);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    smin = std::clamp(smin, -1.0, 1.0);
    if (smin < 0.7) return std::acos(smin);
    // sine-based formula keeps full precision for small angles, where
    // acos(cos theta) loses half the digits
    Matrix residual = g - f * (f.adjoint() * g);
    Eigen::JacobiSVD<Matrix> svd_sin(residual);
    const double smax = std::clamp(svd_sin.singularValues()(0), 0.0, 1.0);
    return std::asin(smax);
}

inline double min_singular_value(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

inline double max_singular_value(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Unitary polar factor of an invertible square matrix (U from m = U * H).
inline Matrix polar_unitary(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

}  // namespace bvp
