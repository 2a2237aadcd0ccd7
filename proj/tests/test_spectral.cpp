#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "bvp/spectral.hpp"

using namespace bvp;

namespace {

ProjectionSymbol even_split(int keep, int fiber) {
    // pullback projection onto the first `keep` fiber components
    Matrix m = Matrix::Zero(fiber, fiber);
    for (int k = 0; k < keep; ++k) m(k, k) = 1.0;
    ProjectionSymbol p;
    p.symbol = MatrixSymbol::constant(m);
    p.pullback = true;
    return p;
}

ProjectionSymbol complement_of(const ProjectionSymbol& p) {
    MatrixSymbol s = p.symbol;
    const int n = s.rows();
    ProjectionSymbol q;
    q.symbol = MatrixSymbol(n, n, 0, [s, n](const EvalPoint& pt) {
        return Matrix(Matrix::Identity(n, n) - s.eval(pt));
    });
    q.pullback = p.pullback;
    return q;
}

}  // namespace

TEST_CASE("dyadic rationals are canonical and exact") {
    CHECK(DyadicRational(2, 1) == DyadicRational::integer(1));
    CHECK(DyadicRational(1, 1) + DyadicRational(1, 1) == DyadicRational::integer(1));
    CHECK(DyadicRational(1, 2) + DyadicRational(1, 2) == DyadicRational(1, 1));
    CHECK(DyadicRational(3, 1) - DyadicRational(1, 1) == DyadicRational::integer(1));
    CHECK((-DyadicRational(5, 3)).value() == doctest::Approx(-0.625));
    CHECK(DyadicRational::integer(0).str() == "0");
    CHECK(DyadicRational(3, 2).str() == "3/2^2");
    CHECK(DyadicRational::integer(7).half().half() == DyadicRational(7, 2));
}

TEST_CASE("circle discretization quantizes xi to the mode number") {
    MatrixSymbol a = MatrixSymbol::from_strings(1, 1, 1, {"xi"});
    Matrix m = discretize_circle_op(a, 3);
    CHECK(m.rows() == 7);
    for (int n = -3; n <= 3; ++n)
        CHECK(std::abs(m(n + 3, n + 3) - Complex(n, 0.0)) < 1e-12);
    CHECK((m - m.diagonal().asDiagonal().toDenseMatrix()).norm() < 1e-12);

    // multiplication by exp(i x) shifts modes up by one
    MatrixSymbol e = MatrixSymbol::from_strings(1, 1, 0, {"exp(i*x)"});
    Matrix s = discretize_circle_op(e, 3);
    for (int n = -3; n <= 2; ++n) CHECK(std::abs(s(n + 4, n + 3) - 1.0) < 1e-12);
    CHECK(std::abs(s.sum() - 6.0) < 1e-10);
}

TEST_CASE("symbols of higher xi-degree are rejected") {
    MatrixSymbol a = MatrixSymbol::from_strings(1, 1, 2, {"xi^2"});
    CHECK_THROWS_AS(discretize_circle_op(a, 3), OrderError);
}

TEST_CASE("spectral projection splits the discrete spectrum at the imaginary axis") {
    MatrixSymbol a = MatrixSymbol::from_strings(1, 1, 1, {"xi"});
    Matrix m = discretize_circle_op(a, 4);
    DiscreteProjection p = spectral_projection(m, 4, 1, even_split(1, 1));
    CHECK(p.idempotency_residual() < 1e-12);
    CHECK(p.rank() == 5);  // modes 0..4, zero mode lands on the plus side
    CHECK((p.p * m - m * p.p).norm() < 1e-10);
}

TEST_CASE("eigenvalues near the spectral cut raise an error") {
    Matrix m(2, 2);
    m << Complex(1e-9, 0.3), 0.0, 0.0, Complex(1.0, 0.0);
    CHECK_THROWS_AS(spectral_projection(m, 0, 2, even_split(1, 2)), SpectralCutError);
    // within the zero tolerance the mode counts as a zero mode instead
    m(0, 0) = Complex(1e-12, 0.3);
    DiscreteProjection p = spectral_projection(m, 0, 2, even_split(1, 2));
    CHECK(p.rank() == 2);
}

TEST_CASE("parity classification") {
    CHECK(parity_classify(even_split(1, 2)) == Parity::Even);

    ProjectionSymbol odd;
    odd.symbol = MatrixSymbol(2, 2, 0, [](const EvalPoint& pt) {
        Matrix m = Matrix::Zero(2, 2);
        m(pt.xi > 0 ? 0 : 1, pt.xi > 0 ? 0 : 1) = 1.0;
        return m;
    });
    CHECK(parity_classify(odd) == Parity::Odd);

    ProjectionSymbol neither;
    neither.symbol = MatrixSymbol(2, 2, 0, [](const EvalPoint& pt) {
        Matrix m = Matrix::Zero(2, 2);
        if (pt.xi > 0)
            m(0, 0) = 1.0;
        else {
            m(0, 0) = 0.5;
            m(0, 1) = 0.5;
            m(1, 0) = 0.5;
            m(1, 1) = 0.5;
        }
        return m;
    });
    CHECK(parity_classify(neither) == Parity::Neither);
}

TEST_CASE("canonical quantization needs a pullback symbol") {
    ProjectionSymbol odd;
    odd.symbol = MatrixSymbol(2, 2, 0, [](const EvalPoint& pt) {
        Matrix m = Matrix::Zero(2, 2);
        m(pt.xi > 0 ? 0 : 1, pt.xi > 0 ? 0 : 1) = 1.0;
        return m;
    });
    CHECK_THROWS_AS(canonical_quantization(odd, 4), AdmissibilityError);
    DiscreteProjection p = canonical_quantization(even_split(1, 2), 4);
    CHECK(p.idempotency_residual() < 1e-12);
    CHECK(p.rank() == mode_count(4));
}

TEST_CASE("finite-rank modifications and their ledger") {
    const int nmodes = 5, fiber = 2;
    DiscreteProjection p = canonical_quantization(even_split(1, fiber), nmodes);
    Vector outside = fourier_mode(2, 1, nmodes, fiber);
    Vector inside = fourier_mode(-1, 0, nmodes, fiber);

    DiscreteProjection q = finite_rank_modify(p, {{outside, true}, {inside, false}});
    CHECK(q.rank() == p.rank());
    CHECK(q.ledger.size() == 2);
    CHECK(q.idempotency_residual() < 1e-12);

    CHECK_THROWS_AS(finite_rank_modify(p, {{inside, true}}), GeometryError);
    CHECK_THROWS_AS(finite_rank_modify(p, {{outside, false}}), GeometryError);
}

TEST_CASE("relative index: trace and SVD methods agree") {
    const int nmodes = 6, fiber = 2;
    DiscreteProjection p0 = canonical_quantization(even_split(1, fiber), nmodes);
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> pick(-nmodes, nmodes);
    for (int trial = 0; trial < 8; ++trial) {
        std::set<int> added, removed;
        std::vector<ProjectionMode> mods;
        const int count = 1 + trial % 3;
        for (int k = 0; k < count; ++k) {
            int n = pick(rng);
            if (trial % 2 == 0 && added.insert(n).second)
                mods.push_back({fourier_mode(n, 1, nmodes, fiber), true});
            else if (removed.insert(n).second)
                mods.push_back({fourier_mode(n, 0, nmodes, fiber), false});
        }
        DiscreteProjection p = finite_rank_modify(p0, mods);
        RelativeIndexResult r = relative_index_detailed(p, p0);
        CHECK(r.trace_method == r.svd_method);
        CHECK(r.index == static_cast<long long>(added.size()) -
                             static_cast<long long>(removed.size()));
    }
}

TEST_CASE("relative index requires equal principal symbols") {
    const int nmodes = 4;
    DiscreteProjection p1 = canonical_quantization(even_split(1, 2), nmodes);
    DiscreteProjection p2 = canonical_quantization(even_split(2, 2), nmodes);
    CHECK_THROWS(relative_index(p1, p2));
}

TEST_CASE("d functional: calibration, relative index and complement") {
    const int nmodes = 6, fiber = 2;
    ProjectionSymbol sym = even_split(1, fiber);
    DiscreteProjection p0 = canonical_quantization(sym, nmodes);
    CHECK(d_value(p0) == DyadicRational::integer(0));

    DiscreteProjection p1 =
        finite_rank_modify(p0, {{fourier_mode(0, 1, nmodes, fiber), true},
                                {fourier_mode(3, 1, nmodes, fiber), true}});
    DiscreteProjection p2 = finite_rank_modify(p0, {{fourier_mode(-2, 0, nmodes, fiber), false}});
    CHECK(d_value(p1) == DyadicRational::integer(2));
    CHECK(d_value(p2) == DyadicRational::integer(-1));

    // property 2: d(P1) - d(P2) = ind(P1, P2)
    CHECK((d_value(p1) - d_value(p2)).num == relative_index(p1, p2));

    // property 3: d(P) + d(1 - P) = 0
    for (const DiscreteProjection& p : {p0, p1, p2}) {
        DiscreteProjection comp = p;
        comp.p = Matrix::Identity(p.dim(), p.dim()) - p.p;
        comp.symbol = complement_of(p.symbol);
        CHECK(d_value(p) + d_value(comp) == DyadicRational::integer(0));
    }
}

TEST_CASE("d functional is invariant under constant unitary conjugation") {
    const int nmodes = 5, fiber = 2;
    DiscreteProjection p =
        finite_rank_modify(canonical_quantization(even_split(1, fiber), nmodes),
                           {{fourier_mode(1, 1, nmodes, fiber), true}});
    Matrix u2(2, 2);
    const double c = std::cos(0.7), s = std::sin(0.7);
    u2 << Complex(c, 0), Complex(0, s), Complex(0, s), Complex(c, 0);
    Matrix u = Matrix::Zero(p.dim(), p.dim());
    for (int n = 0; n < mode_count(nmodes); ++n) u.block(2 * n, 2 * n, 2, 2) = u2;

    DiscreteProjection q = p;
    q.p = u * p.p * u.adjoint();
    MatrixSymbol ps = p.symbol.symbol;
    q.symbol.symbol = MatrixSymbol(fiber, fiber, 0, [ps, u2](const EvalPoint& pt) {
        return Matrix(u2 * ps.eval(pt) * u2.adjoint());
    });
    CHECK(d_value(q) == d_value(p));
}

TEST_CASE("d functional rejects inadmissible symbols") {
    ProjectionSymbol odd;
    odd.symbol = MatrixSymbol(2, 2, 0, [](const EvalPoint& pt) {
        Matrix m = Matrix::Zero(2, 2);
        m(pt.xi > 0 ? 0 : 1, pt.xi > 0 ? 0 : 1) = 1.0;
        return m;
    });
    DiscreteProjection p = spectral_projection(
        discretize_circle_op(MatrixSymbol::from_strings(2, 2, 1, {"xi", "0", "0", "xi"}), 3), 3, 2,
        odd);
    CHECK_THROWS_AS(d_value(p), AdmissibilityError);
}

TEST_CASE("doubled problems have classical full-rank conditions") {
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(1, {MatrixSymbol::identity(1),
                              MatrixSymbol::from_strings(1, 1, 1, {"-i*abs(xi)"})});
    ProjectionSymbol one = even_split(1, 1), zero = even_split(0, 1);
    p.conditions.push_back(BoundaryCondition({one.symbol}, 1));
    p.projections.push_back(one);
    p.conditions.push_back(BoundaryCondition({zero.symbol}, 1));
    p.projections.push_back(zero);

    BvpProblem dbl = double_even(p);
    CHECK(dbl.op.rank() == 2);
    CHECK_FALSE(dbl.is_spectral(0));
    CHECK(dbl.condition(0).target_rank == 1);
    // condition row is [P, 1-P]
    Matrix row0 = dbl.condition(0).jet_row(0.3, 1.0);
    CHECK((row0 - (Matrix(1, 2) << 1.0, 0.0).finished()).norm() < 1e-14);
    Matrix row1 = dbl.condition(1).jet_row(0.3, 1.0);
    CHECK((row1 - (Matrix(1, 2) << 0.0, 1.0).finished()).norm() < 1e-14);

    // second block carries the antipodal pullback: -(-i|xi|) at -xi is +i|xi|
    Matrix a = dbl.op.coefficients()[1].eval(0.0, 0.0, 1.0, 0.0);
    CHECK((a - (Matrix(2, 2) << Complex(0, -1), 0.0, 0.0, Complex(0, 1)).finished()).norm() <
          1e-14);
    CHECK_THROWS_AS(double_odd(p), AdmissibilityError);
}

TEST_CASE("folding an odd pair and unfolding is the identity") {
    BvpProblem d1, d2;
    d1.manifold = d2.manifold = ModelManifold::cylinder();
    d1.op = CollarOperator(1, {MatrixSymbol::identity(1),
                               MatrixSymbol::from_strings(1, 1, 1, {"-i*abs(xi)"})});
    d2.op = CollarOperator(1, {MatrixSymbol::identity(1),
                               MatrixSymbol::from_strings(1, 1, 1, {"i*abs(xi)"})});
    ProjectionSymbol one = even_split(1, 1), zero = even_split(0, 1);
    for (int c = 0; c < 2; ++c) {
        d1.conditions.push_back(BoundaryCondition({one.symbol}, 1));
        d1.projections.push_back(one);
        d2.conditions.push_back(BoundaryCondition({zero.symbol}, 1));
        d2.projections.push_back(zero);
    }
    BvpProblem folded = fold_odd_pair({d1, d2});
    CHECK(folded.op.rank() == 2);
    OddPair back = unfold_odd_pair(folded, {one, one});
    Matrix a1 = back.d1.op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0);
    Matrix a2 = back.d2.op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0);
    CHECK((a1 - d1.op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0)).norm() < 1e-14);
    CHECK((a2 - d2.op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0)).norm() < 1e-14);
}
