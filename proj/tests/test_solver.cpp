#include "snaklat/solver.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace snaklat;

namespace {

Vector random_vector(Eigen::Index n, unsigned seed, double a = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-a, a);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

// Chord iteration with the frozen d = 0 diagonal: converges for small d without any
// linear solve, so it is independent of the sparse factorizations under test.
Vector fixed_point(const SteadyState& p, const Vector& u0, double mu, double d) {
    const Vector fu = p.pointwise(u0, mu, 1, 0);
    Vector u = u0;
    for (int it = 0; it < 10000; ++it) {
        const Vector r = d * laplacian_apply(p.grid(), u) + p.pointwise(u, mu, 0, 0);
        u -= r.cwiseQuotient(fu);
        if (r.lpNorm<Eigen::Infinity>() < 1e-14) break;
    }
    return u;
}

}  // namespace

TEST_CASE("residual examples", "[solver]") {
    const auto cq = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(6, Symmetry::OffSite);
    const SteadyState p(g, cq);
    const Vector u = anti_continuum_pattern(g, {3, 2}, 0.5, cq).values;
    CHECK(p.residual(u, 0.5, 0.0).lpNorm<Eigen::Infinity>() == 0.0);
    for (Family fam : {Family::CubicQuintic, Family::QuadraticCubic}) {
        const SteadyState q(g, builtin_nonlinearity(fam));
        CHECK(q.residual(Vector::Zero(static_cast<Eigen::Index>(g.size())), 0.3, 0.2).lpNorm<Eigen::Infinity>() == 0.0);
    }
    const Vector c = Vector::Constant(static_cast<Eigen::Index>(g.size()), cq.u_plus(0.5));
    CHECK(p.residual(c, 0.5, 0.1).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("jacobian: diagonal at d = 0, finite differences, weighted symmetry", "[solver]") {
    unsigned seed = 11;
    for (Family fam : {Family::CubicQuintic, Family::QuadraticCubic, Family::CubicLogistic})
        for (const GridSpec& g : {GridSpec::wedge(7, Symmetry::OffSite), GridSpec::wedge(6, Symmetry::OnSite),
                                  GridSpec::full_square(4, Symmetry::None)}) {
            const SteadyState p(g, builtin_nonlinearity(fam));
            const auto n = static_cast<Eigen::Index>(g.size());
            const Vector u = random_vector(n, seed++, 1.5), v = random_vector(n, seed++), w = random_vector(n, seed++);
            const double mu = 0.4, d = 0.07;

            const SparseMatrix J0 = p.jacobian(u, mu, 0.0);
            const Vector fu = p.pointwise(u, mu, 1, 0);
            CHECK((Eigen::MatrixXd(J0) - Eigen::MatrixXd(fu.asDiagonal())).norm() == 0.0);

            const SparseMatrix J = p.jacobian(u, mu, d);
            const double h = 1e-5;
            const Vector fd = (p.residual(u + h * v, mu, d) - p.residual(u - h * v, mu, d)) / (2 * h);
            CHECK((fd - J * v).lpNorm<Eigen::Infinity>() < 1e-8);
            const Vector& W = p.weights();
            CHECK(std::abs(W.cwiseProduct(J * v).dot(w) - W.cwiseProduct(v).dot(J * w)) < 1e-12);
            CHECK(J.nonZeros() <= 5 * n);
        }
}

TEST_CASE("newton from an exact pattern takes no steps", "[solver]") {
    const auto nl = builtin_nonlinearity(Family::QuadraticCubic);
    const GridSpec g = GridSpec::wedge(8, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const Vector u0 = anti_continuum_pattern(g, {4, 2, Variant::VBar}, 0.3, nl).values;
    const NewtonResult r = newton_solve(p, u0, 0.3, 0.0);
    CHECK(r.iterations == 0);
    CHECK(r.u == u0);
}

TEST_CASE("newton agrees with the fixed-point oracle", "[solver]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
        const GridSpec g = GridSpec::wedge(10, s);
        const SteadyState p(g, nl);
        for (PatternId id : {PatternId{2, 1}, PatternId{3, 2, Variant::VBar}, PatternId{4, 4}}) {
            id.symmetry = s;
            const Vector u0 = anti_continuum_pattern(g, id, 0.5, nl).values;
            const double d = 1e-3;
            const NewtonResult r = newton_solve(p, u0, 0.5, d);
            CHECK(p.residual(r.u, 0.5, d).lpNorm<Eigen::Infinity>() <= 1e-10);
            CHECK(r.residual_norm == p.residual(r.u, 0.5, d).lpNorm<Eigen::Infinity>());
            const Vector oracle = fixed_point(p, u0, 0.5, d);
            CHECK((r.u - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
            const double shift = (r.u - u0).lpNorm<Eigen::Infinity>();
            CHECK(shift > 0.0);
            CHECK(shift < 20 * d);
        }
    }
}

TEST_CASE("newton at a degenerate window end fails or stays put", "[solver]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(5, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const Vector u0 = anti_continuum_pattern(g, {2, 1, Variant::VBar}, 1.0, nl).values;
    try {
        const NewtonResult r = newton_solve(p, u0, 1.0, 1e-3);
        CHECK(p.residual(r.u, 1.0, 1e-3).lpNorm<Eigen::Infinity>() <= 1e-10);
    } catch (const Error& e) {
        CHECK((e.kind() == ErrorKind::NoConvergence || e.kind() == ErrorKind::SingularJacobian));
    }
}

TEST_CASE("bordered solves", "[solver]") {
    SECTION("identity with zero border") {
        SparseMatrix I(4, 4);
        I.setIdentity();
        const Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4, 1), D = Eigen::MatrixXd::Identity(1, 1);
        const Vector rhs = random_vector(5, 5);
        CHECK((bordered_solve(I, B, B, D, rhs) - rhs).norm() < 1e-15);
    }
    SECTION("rank-deficient block bordered by its kernel") {
        std::mt19937 rng(9);
        std::normal_distribution<double> nd;
        Eigen::MatrixXd Q = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return nd(rng); });
        Q = Eigen::HouseholderQR<Eigen::MatrixXd>(Q).householderQ();
        Vector lam(5);
        lam << 0.0, 1.0, -2.0, 3.0, 0.5;
        const Eigen::MatrixXd Jd = Q * lam.asDiagonal() * Q.transpose();
        const SparseMatrix J = Jd.sparseView(0.0, 0.0);
        const Eigen::MatrixXd phi = Q.col(0);
        const Eigen::MatrixXd D = Eigen::MatrixXd::Zero(1, 1);
        const Vector rhs = random_vector(6, 6);
        const Vector x = bordered_solve(J, phi, phi, D, rhs);
        Eigen::MatrixXd A(6, 6);
        A << Jd, phi, phi.transpose(), D;
        const Vector oracle = A.fullPivLu().solve(rhs);
        CHECK((x - oracle).norm() < 1e-12);
        SparseMatrix Z(5, 5);
        CHECK_THROWS_AS(bordered_solve(Z, Eigen::MatrixXd::Zero(5, 1), phi, D, rhs), Error);
    }
    SECTION("arclength row holds exactly") {
        const auto nl = builtin_nonlinearity(Family::CubicQuintic);
        const GridSpec g = GridSpec::wedge(8, Symmetry::OffSite);
        const SteadyState p(g, nl);
        const auto n = static_cast<Eigen::Index>(g.size());
        const Vector u = newton_solve(p, anti_continuum_pattern(g, {3, 1}, 0.4, nl).values, 0.4, 1e-3).u;
        Vector t = random_vector(n + 1, 8);
        t.normalize();
        const Eigen::MatrixXd B = p.d_mu(u, 0.4), C = t.head(n);
        Eigen::MatrixXd D(1, 1);
        D(0, 0) = t[n];
        const Vector rhs = random_vector(n + 1, 12);
        const Vector x = bordered_solve(p.jacobian(u, 0.4, 1e-3), B, C, D, rhs);
        CHECK(std::abs(t.dot(x) - rhs[n]) < 1e-12);
        CHECK((p.jacobian(u, 0.4, 1e-3) * x.head(n) + B * x[n] - rhs.head(n)).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("solve_jacobian matches a dense solve", "[solver]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(9, Symmetry::OnSite);
    const SteadyState p(g, nl);
    const auto n = static_cast<Eigen::Index>(g.size());
    const Vector u = anti_continuum_pattern(g, {4, 3, Variant::VBar}, 0.6, nl).values;
    const SparseMatrix J = p.jacobian(u, 0.6, 0.01);
    const Vector b = random_vector(n, 4);
    const Vector x = solve_jacobian(J, p.weights(), b);
    const Vector oracle = Eigen::MatrixXd(J).fullPivLu().solve(b);
    CHECK((x - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
}
