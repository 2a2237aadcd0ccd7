#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bvp/homotopy.hpp"

using namespace bvp;

namespace {

// random diagonalizable tangential coefficient with eigenvalues off the axis;
// the Im-sign pattern is shared between the covector directions so rank(L+)
// is constant and a classical condition exists
Matrix random_off_axis(int n, const std::vector<int>& signs, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix v(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v(i, j) = Complex(u(rng), u(rng));
    Matrix d = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        d(i, i) = Complex(u(rng), signs[i] * (0.4 + 0.6 * std::abs(u(rng))));
    return v * d * v.inverse();
}

BvpProblem random_first_order(int n, std::mt19937& rng) {
    std::vector<int> signs(n);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < n; ++i) signs[i] = coin(rng) ? 1 : -1;
    Matrix mp = random_off_axis(n, signs, rng);
    Matrix mm = random_off_axis(n, signs, rng);
    auto afn = [mp, mm](const EvalPoint& p) -> Matrix {
        return p.xi >= 0 ? Matrix(p.xi * mp) : Matrix(-p.xi * mm);
    };
    BvpProblem prob;
    prob.manifold = ModelManifold::cylinder();
    prob.op = CollarOperator(1, {MatrixSymbol::identity(n), MatrixSymbol(n, n, 1, afn)});
    for (int c = 0; c < 2; ++c) {
        CollarOperator side = prob.component_operator(c);
        const int g = bounded_subspaces(companion_matrix(side, 0.0, 1.0)).first.rank();
        auto bfn = [side](const EvalPoint& p) -> Matrix {
            auto [fp, fm] =
                bounded_subspaces(companion_matrix(side, p.x, p.xi), 1e-8, p.x, p.xi);
            return fp.columns.adjoint();
        };
        prob.conditions.push_back(BoundaryCondition({MatrixSymbol(g, n, 0, bfn)}, g));
        prob.projections.push_back(std::nullopt);
    }
    return prob;
}

BvpProblem flat_model() {
    // tangential operator |xi| diag(2, -3): eigenvalues flatten to +-1
    std::vector<Expr> d1(4, Expr(0.0));
    d1[0] = Expr(Complex(0.0, -2.0)) * Expr::abs_xi();
    d1[3] = Expr(Complex(0.0, 3.0)) * Expr::abs_xi();
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(1, {MatrixSymbol::identity(2), MatrixSymbol(2, 2, 1, d1)});
    p.conditions.push_back(
        BoundaryCondition({MatrixSymbol::constant((Matrix(1, 2) << 1.0, 0.0).finished())}, 1));
    p.projections.push_back(std::nullopt);
    p.conditions.push_back(
        BoundaryCondition({MatrixSymbol::constant((Matrix(1, 2) << 0.0, 1.0).finished())}, 1));
    p.projections.push_back(std::nullopt);
    return p;
}

}  // namespace

TEST_CASE("flattening sends diag(2,-3) to diag(1,-1)") {
    BvpProblem p = flat_model();
    auto [path, cert] = flatten_path(p, 21);
    CHECK(cert.valid);
    Matrix end = path.at(1.0).op.coefficients()[1].eval(0.3, 0.0, 2.0, 0.0);
    // tangential operator i * coeff = |xi| diag(1, -1)
    Matrix a_end = Complex(0, 1) * end;
    CHECK((a_end - 2.0 * (Matrix(2, 2) << 1.0, 0.0, 0.0, -1.0).finished()).norm() < 1e-12);
    // parameter 0 is the input itself
    Matrix start = path.at(0.0).op.coefficients()[1].eval(0.3, 0.0, 2.0, 0.0);
    CHECK((start - p.op.coefficients()[1].eval(0.3, 0.0, 2.0, 0.0)).norm() == 0.0);
}

TEST_CASE("flattening follows the eigenvalue law and fixes the splitting") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 4; ++trial) {
        BvpProblem p = random_first_order(2, rng);
        auto [path, cert] = flatten_path(p, 21);
        CHECK(cert.valid);

        Matrix a0 = p.op.coefficients()[1].eval(0.3, 0.0, 1.0, 0.0);
        Matrix s = detail::decay_projector(a0);
        Matrix flat = Complex(0, -1) * (2.0 * s - Matrix::Identity(2, 2));
        for (double tau : {0.25, 0.5, 0.75}) {
            Matrix at = path.at(tau).op.coefficients()[1].eval(0.3, 0.0, 1.0, 0.0);
            CHECK((at - ((1.0 - tau) * a0 + tau * flat)).norm() == 0.0);
        }
        for (const auto& step : cert.steps) CHECK(step.max_angle < 1e-8);
    }
}

TEST_CASE("flattening an already flat operator is a constant path") {
    BvpProblem p = flat_model();
    auto [path0, cert0] = flatten_path(p, 11);
    BvpProblem flat = path0.at(1.0);
    auto [path, cert] = flatten_path(flat, 11);
    CHECK(cert.valid);
    Matrix ref = flat.op.coefficients()[1].eval(0.7, 0.0, 1.0, 0.0);
    for (double tau : {0.3, 0.6, 1.0}) {
        Matrix at = path.at(tau).op.coefficients()[1].eval(0.7, 0.0, 1.0, 0.0);
        CHECK((at - ref).norm() < 1e-13);
    }
}

TEST_CASE("flattening rejects higher order and collar-variable coefficients") {
    BvpProblem p;
    p.manifold = ModelManifold::cylinder();
    p.op = CollarOperator(2, {MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1, 1),
                              MatrixSymbol::from_strings(1, 1, 2, {"xi^2"})});
    CHECK_THROWS_AS(flatten_path(p), OrderError);
    BvpProblem q = flat_model();
    q.op = CollarOperator(
        1, {MatrixSymbol::identity(1),
            MatrixSymbol::from_strings(1, 1, 1, {"-i*(1+t)*abs(xi)"})});
    CHECK_THROWS_AS(flatten_path(q), CapabilityError);
}

TEST_CASE("rotation: start is the stabilized input, endpoint is the target projection") {
    BvpProblem flat = flatten_path(flat_model(), 11).first.at(1.0);
    Matrix target = Matrix::Identity(1, 1);
    auto [path, cert] = rotate_path(flat, MatrixSymbol::constant(target), 0, 21);
    CHECK(cert.valid);

    BvpProblem start = path.at(0.0);
    BvpProblem stab = stabilized_start(flat, 1);
    for (double xi : {1.0, -1.0}) {
        CHECK((start.condition(0).jet_row(0.4, xi) - stab.condition(0).jet_row(0.4, xi)).norm() ==
              0.0);
        CHECK((start.op.coefficients()[1].eval(0.4, 0.0, xi, 0.0) -
               stab.op.coefficients()[1].eval(0.4, 0.0, xi, 0.0))
                  .norm() < 1e-14);
    }

    BvpProblem end = path.at(1.0);
    REQUIRE(end.is_spectral(0));
    for (double xi : {1.0, -1.0}) {
        Matrix b = end.condition(0).jet_row(0.4, xi);
        Matrix q = end.projections[0]->symbol.eval(0.4, 0.0, xi, 0.0);
        CHECK((b - q).norm() == 0.0);  // exact at the symbol level
    }
}

TEST_CASE("rotation projector family stays idempotent") {
    std::mt19937 rng(9);
    BvpProblem flat = flatten_path(random_first_order(2, rng), 11).first.at(1.0);
    const int g = flat.condition(0).target_rank;
    auto [path, cert] = rotate_path(flat, MatrixSymbol::identity(g), 0, 21);
    CHECK(cert.valid);
    for (double s : path.params) {
        BvpProblem prob = path.at(s);
        const int dim = prob.op.rank();
        for (double xi : {1.0, -1.0}) {
            Matrix at = prob.op.coefficients()[1].eval(0.9, 0.0, xi, 0.0);
            Matrix p = (Complex(0, 1) * at + Matrix::Identity(dim, dim)) / 2.0;
            CHECK((p * p - p).norm() < 1e-10);
        }
    }
}

TEST_CASE("rotation refuses unflattened input and rank mismatches") {
    std::mt19937 rng(13);
    BvpProblem p = random_first_order(2, rng);
    CHECK_THROWS_AS(rotate_path(p, MatrixSymbol::identity(1), 0, 5), CannotRotateError);
    BvpProblem flat = flatten_path(p, 5).first.at(1.0);
    const int g = flat.condition(0).target_rank;
    // target of the wrong rank: identity if the condition is empty, zero else
    Matrix wrong = g == 0 ? Matrix(Matrix::Identity(2, 2)) : Matrix(Matrix::Zero(g + 1, g + 1));
    CHECK_THROWS_AS(rotate_path(flat, MatrixSymbol::constant(wrong), 0, 5), CannotRotateError);
}

TEST_CASE("collar pullback changes nothing outside the collar") {
    BvpProblem p = flat_model();
    auto [bpath, bcert] = flatten_path(p, 11);
    Cutoff cutoff = Cutoff::standard();
    for (double tau : {0.3, 1.0}) {
        BvpProblem pulled = collar_pull(p, bpath, cutoff, tau);
        for (double t : {2.0 / 3.0, 0.8, 1.0}) {
            Matrix d = pulled.op.coefficients()[1].eval(0.5, t, 1.0, 0.0) -
                       p.op.coefficients()[1].eval(0.5, t, 1.0, 0.0);
            CHECK(d.norm() == 0.0);
        }
        // at the boundary face the coefficients are the family member's
        Matrix at0 = pulled.op.coefficients()[1].eval(0.5, 0.0, 1.0, 0.0);
        Matrix fam = bpath.at(tau).op.coefficients()[1].eval(0.5, 0.0, 1.0, 0.0);
        CHECK((at0 - fam).norm() < 1e-13);
    }
    // tau = 0 is the identity
    BvpProblem same = collar_pull(p, bpath, cutoff, 0.0);
    CHECK((same.op.coefficients()[1].eval(0.2, 0.1, 1.0, 0.0) -
           p.op.coefficients()[1].eval(0.2, 0.1, 1.0, 0.0))
              .norm() == 0.0);
}

TEST_CASE("invalid cutoffs are rejected") {
    Cutoff bad1{[](double) { return 0.5; }};
    Cutoff bad2{[](double t) { return t; }};
    BvpProblem p = flat_model();
    auto [bpath, bcert] = flatten_path(p, 5);
    CHECK_THROWS_AS(collar_pull(p, bpath, bad1, 0.5), InvalidCutoffError);
    CHECK_THROWS_AS(collar_pull(p, bpath, bad2, 0.5), InvalidCutoffError);
}

TEST_CASE("certification locates the step where ellipticity fails") {
    // coefficient -i(1 - 2 tau)|xi| hits a real ODE root at tau = 1/2
    HomotopyPath path;
    path.kind = PathKind::Flatten;
    path.params = uniform_grid(21);
    path.family = [](double tau) {
        BvpProblem p;
        p.manifold = ModelManifold::cylinder();
        const Complex c(0.0, -(1.0 - 2.0 * tau));
        p.op = CollarOperator(
            1, {MatrixSymbol::identity(1),
                MatrixSymbol(1, 1, 1, [c](const EvalPoint& pt) {
                    return (Matrix(1, 1) << c * std::abs(pt.xi)).finished();
                })});
        p.conditions.push_back(BoundaryCondition({MatrixSymbol::identity(1)}, 1));
        p.projections.push_back(std::nullopt);
        p.conditions.push_back(BoundaryCondition({MatrixSymbol::zero(0, 1)}, 0));
        p.projections.push_back(std::nullopt);
        return p;
    };
    PathCertificate cert = certify_path(path);
    CHECK_FALSE(cert.valid);
    CHECK(cert.detail.find("0.5") != std::string::npos);
    for (const auto& step : cert.steps)
        if (step.param < 0.4) CHECK(step.elliptic);
}

TEST_CASE("order reduction is a no-op for first-order input") {
    BvpProblem p = flat_model();
    OrderReductionResult r = reduce_order(p, 5);
    CHECK(r.trace.trivial);
    CHECK_FALSE(static_cast<bool>(r.trace.decomposition));
    CHECK(r.certificate.valid);
    CHECK(r.first_order.op.order() == 1);
    CHECK((r.path.at(0.8).op.coefficients()[1].eval(0.1, 0.0, 1.0, 0.0) -
           p.op.coefficients()[1].eval(0.1, 0.0, 1.0, 0.0))
              .norm() == 0.0);
}

TEST_CASE("order reduction of a genuinely mixed second-order operator") {
    // sigma(D) = (lam - i|xi|)(lam - 2i|xi|): no model-power factor
    BvpProblem p;
    p.manifold = ModelManifold::interval();
    MatrixSymbol a1(1, 1, 1, [](const EvalPoint& pt) {
        return (Matrix(1, 1) << Complex(0.0, -3.0 * std::abs(pt.xi))).finished();
    });
    MatrixSymbol a2(1, 1, 2, [](const EvalPoint& pt) {
        return (Matrix(1, 1) << Complex(-2.0 * pt.xi * pt.xi, 0.0)).finished();
    });
    p.op = CollarOperator(2, {MatrixSymbol::identity(1), a1, a2});
    p.conditions.push_back(BoundaryCondition(
        {MatrixSymbol::constant((Matrix(2, 1) << 1.0, 0.0).finished()),
         MatrixSymbol::constant((Matrix(2, 1) << 0.0, 1.0).finished())},
        2));
    p.projections.push_back(std::nullopt);
    p.conditions.push_back(BoundaryCondition({MatrixSymbol::zero(0, 1), MatrixSymbol::zero(0, 1)}, 0));
    p.projections.push_back(std::nullopt);

    OrderReductionResult r = reduce_order(p, 21);
    CHECK_FALSE(r.trace.trivial);
    CHECK(r.certificate.valid);
    CHECK(r.trace.decomposition_residual < 1e-12);
    CHECK(r.trace.endpoint_residual < 1e-10);
    CHECK(r.trace.projection_min_sv > 0.1);
    CHECK(r.first_order.op.order() == 1);
    CHECK(r.first_order.op.rank() == 2);

    // the plus/minus decomposition sums to the identity by construction
    std::vector<Matrix> d = r.trace.decomposition(0.0, 1.0);
    Matrix sum = Matrix::Zero(1, 1);
    for (const auto& dk : d) sum += dk;
    CHECK((sum - Matrix::Identity(1, 1)).norm() < 1e-12);
}

TEST_CASE("order reduction of an already factored operator is constant") {
    // lam^2 + xi^2 = (lam - i|xi|)(lam + i|xi|) factors through the model power
    BvpProblem p;
    p.manifold = ModelManifold::interval();
    p.op = CollarOperator(2, {MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1, 1),
                              MatrixSymbol::from_strings(1, 1, 2, {"xi^2"})});
    for (int c = 0; c < 2; ++c) {
        p.conditions.push_back(
            BoundaryCondition({MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1)}, 1));
        p.projections.push_back(std::nullopt);
    }
    OrderReductionResult r = reduce_order(p, 21);
    CHECK(r.trace.trivial);
    CHECK(r.certificate.valid);
    CHECK(r.trace.endpoint_residual < 1e-10);
    Matrix c0 = r.path.at(0.0).op.coefficients()[1].eval(0.0, 0.3, 1.0, 0.0);
    Matrix c1 = r.path.at(0.7).op.coefficients()[1].eval(0.0, 0.3, 1.0, 0.0);
    CHECK((c0 - c1).norm() == 0.0);
}

TEST_CASE("order reduction needs collar-constant coefficients") {
    BvpProblem p;
    p.manifold = ModelManifold::interval();
    p.op = CollarOperator(2, {MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1, 1),
                              MatrixSymbol::from_strings(1, 1, 2, {"(1+t)*xi^2"})});
    for (int c = 0; c < 2; ++c) {
        p.conditions.push_back(
            BoundaryCondition({MatrixSymbol::identity(1), MatrixSymbol::zero(1, 1)}, 1));
        p.projections.push_back(std::nullopt);
    }
    CHECK_THROWS_AS(reduce_order(p, 5), CapabilityError);
}

TEST_CASE("reduction to spectral form ends in a projection condition") {
    BvpProblem dpm = make_model_operator(ModelKind::Dpm, 1, 1, ModelManifold::cylinder());
    SpectralReduction red = reduce_to_spectral(dpm, 21);
    CHECK(red.certificate.valid);
    for (int c = 0; c < red.problem.components(); ++c) {
        REQUIRE(red.problem.is_spectral(c));
        for (double xi : {1.0, -1.0}) {
            Matrix b = red.problem.condition(c).jet_row(0.3, xi);
            Matrix q = red.problem.projections[c]->symbol.eval(0.3, 0.0, xi, 0.0);
            CHECK((b - q).norm() == 0.0);
        }
    }

    // running the reduction again adds no rotation segments
    SpectralReduction again = reduce_to_spectral(red.problem, 11);
    CHECK(again.certificate.valid);
    CHECK(again.problem.op.rank() == red.problem.op.rank());
    Matrix c0 = again.path.at(0.0).op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0);
    Matrix c1 = again.path.at(1.0).op.coefficients()[1].eval(0.2, 0.0, 1.0, 0.0);
    CHECK((c0 - c1).norm() < 1e-13);
}
