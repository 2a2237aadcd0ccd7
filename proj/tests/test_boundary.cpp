#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bvp/boundary.hpp"

using namespace bvp;

namespace {

// scalar order-2 operator lam^2 + xi^2 on the cylinder with Dirichlet data
BvpProblem laplace_like() {
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(2, {MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1, 1),
                              MatrixSymbol::from_strings(1, 1, 2, {"xi^2"})});
    for (int c = 0; c < 2; ++c) {
        p.conditions.push_back(BoundaryCondition(
            {MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1)}, 1));
        p.projections.push_back(std::nullopt);
    }
    return p;
}

// scalar Cauchy-Riemann-type operator lam - i*xi (no |.|): obstructed
CollarOperator cr_like() {
    return CollarOperator(1, {MatrixSymbol::identity(1),
                              MatrixSymbol::from_strings(1, 1, 1, {"-i*xi"})});
}

}  // namespace

TEST_CASE("companion eigenvalues are the roots of the symbol determinant") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix a1(2, 2), a2(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            a1(i, j) = Complex(u(rng), u(rng));
            a2(i, j) = Complex(u(rng), u(rng));
        }
    CollarOperator op(2, {MatrixSymbol::identity(2), MatrixSymbol::constant(a1, 1),
                          MatrixSymbol::constant(a2, 2)});
    Matrix c = companion_matrix(op, 0.0, 1.0);
    CHECK(c.rows() == 4);
    for (Complex lam : eigenvalues_of(c)) {
        Matrix s = lam * lam * Matrix::Identity(2, 2) + lam * a1 + a2;
        CHECK(std::abs(s.determinant()) < 1e-8);
    }
}

TEST_CASE("bounded solution subspaces of the model operator") {
    BvpProblem dpm = make_model_operator(ModelKind::Dpm, 1, 1, ModelManifold::cylinder());
    for (double xi : {1.0, -1.0}) {
        auto [fp, fm] = bounded_subspaces(companion_matrix(dpm.op, 0.0, xi), 1e-8, 0.0, xi);
        CHECK(fp.rank() == 1);
        CHECK(fm.rank() == 1);
        // L+ is the u_- line: the root of -lam + i|xi| block lies above the axis
        CHECK(std::abs(fp.columns(1, 0)) == doctest::Approx(1.0));
        CHECK(std::abs(fp.columns(0, 0)) < 1e-12);
    }
    EllipticityReport rep = sl_check(dpm);
    CHECK(rep.elliptic);
    CHECK(rep.global_min == doctest::Approx(1.0));
}

TEST_CASE("real ODE roots are an ellipticity margin error") {
    CollarOperator op(1, {MatrixSymbol::identity(1), MatrixSymbol::from_strings(1, 1, 1, {"xi"})});
    CHECK_THROWS_AS(bounded_subspaces(companion_matrix(op, 0.0, 1.0)), EllipticityMarginError);
}

TEST_CASE("Dirichlet data is Shapiro-Lopatinskii elliptic for the Laplace-type operator") {
    BvpProblem p = laplace_like();
    EllipticityReport rep = sl_check(p);
    CHECK(rep.elliptic);
    CHECK_FALSE(rep.rank_mismatch);
    CHECK(rep.global_min > 0.5);
    for (const auto& s : rep.samples) {
        CHECK(s.rank_plus == 1);
        CHECK(s.rank_target == 1);
    }
}

TEST_CASE("rank mismatch is reported, not thrown") {
    BvpProblem p = laplace_like();
    // two rows of data against a rank-1 bounded subspace
    p.conditions[0] = BoundaryCondition(
        {MatrixSymbol::from_strings(2, 1, 0, {"1", "0"}),
         MatrixSymbol::from_strings(2, 1, 0, {"0", "1"})},
        2);
    EllipticityReport rep = sl_check(p);
    CHECK(rep.rank_mismatch);
    CHECK_FALSE(rep.elliptic);
    CHECK(rep.detail.find("rank") != std::string::npos);
}

TEST_CASE("empty data against an empty bounded subspace is trivially elliptic") {
    // lam + i|xi| has no bounded solutions at the first component
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(1, {MatrixSymbol::identity(1),
                              MatrixSymbol::from_strings(1, 1, 1, {"i*abs(xi)"})});
    p.conditions.push_back(BoundaryCondition({MatrixSymbol::zero(0, 1)}, 0));
    p.projections.push_back(std::nullopt);
    p.conditions.push_back(BoundaryCondition({MatrixSymbol::identity(1)}, 1));
    p.projections.push_back(std::nullopt);
    EllipticityReport rep = sl_check(p);
    CHECK(rep.elliptic);
}

TEST_CASE("obstruction vanishes for symmetric-rank operators") {
    BvpProblem dpm = make_model_operator(ModelKind::Dpm, 1, 1, ModelManifold::cylinder());
    ObstructionReport rep = ab_obstruction(dpm.op);
    CHECK(rep.rank_plus_dir == 1);
    CHECK(rep.rank_minus_dir == 1);
    CHECK(rep.obstruction == 0);
    CHECK_FALSE(rep.obstructed);

    ObstructionReport lap = ab_obstruction(laplace_like().op);
    CHECK(lap.obstruction == 0);
}

TEST_CASE("Cauchy-Riemann-type operator carries obstruction one") {
    ObstructionReport rep = ab_obstruction(cr_like());
    CHECK(rep.rank_plus_dir == 1);
    CHECK(rep.rank_minus_dir == 0);
    CHECK(rep.obstruction == 1);
    CHECK(rep.obstructed);

    // no classical condition has matching ranks on both covector directions
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = cr_like();
    for (int c = 0; c < 2; ++c) {
        p.conditions.push_back(BoundaryCondition({MatrixSymbol::identity(1)}, 1));
        p.projections.push_back(std::nullopt);
    }
    EllipticityReport rep2 = sl_check(p);
    CHECK(rep2.rank_mismatch);
}

TEST_CASE("spectral condition targets the range of the projection symbol") {
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(1, {MatrixSymbol::identity(1),
                              MatrixSymbol::from_strings(1, 1, 1, {"-i*abs(xi)"})});
    // L+ has rank 1; condition P u = g with sigma(P) = 1
    ProjectionSymbol ps;
    ps.symbol = MatrixSymbol::identity(1);
    ps.pullback = true;
    p.conditions.push_back(BoundaryCondition({MatrixSymbol::identity(1)}, 1));
    p.projections.push_back(ps);
    // reflected side has empty L+, matched by sigma(P) = 0
    ProjectionSymbol ps0;
    ps0.symbol = MatrixSymbol::zero(1, 1);
    ps0.pullback = true;
    p.conditions.push_back(BoundaryCondition({MatrixSymbol::zero(1, 1)}, 1));
    p.projections.push_back(ps0);
    EllipticityReport rep = sl_check(p);
    CHECK(rep.elliptic);
    CHECK(rep.global_min == doctest::Approx(1.0));
}

TEST_CASE("broken ellipticity along the boundary circle is an error") {
    // rank of L+ jumps with x: coefficient -i*cos(x)*|xi| changes sign
    CollarOperator op(1, {MatrixSymbol::identity(1),
                          MatrixSymbol::from_strings(1, 1, 1, {"2*i*cos(x)*abs(xi)"})});
    CHECK_THROWS(ab_obstruction(op));
}
