#include "snaklat/codim2.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace snaklat;

TEST_CASE("geometric fit recovers synthetic sequences", "[codim2]") {
    std::vector<int> Ns;
    std::vector<double> mus, ds;
    for (int N = 4; N <= 10; ++N) {
        Ns.push_back(N);
        mus.push_back(0.887 + 0.9 * std::pow(0.35, N));
        ds.push_back(0.068 - 0.4 * std::pow(0.35, N));
    }
    const GeometricFit f = geometric_fit(Ns, mus, ds);
    CHECK(f.mu_inf == Catch::Approx(0.887).margin(1e-9));
    CHECK(f.d_inf == Catch::Approx(0.068).margin(1e-9));
    CHECK(f.rho == Catch::Approx(0.35).margin(1e-6));
    CHECK(f.c_mu == Catch::Approx(0.9).epsilon(1e-5));
    CHECK(f.c_d == Catch::Approx(-0.4).epsilon(1e-5));
    CHECK(f.rms < 1e-10);
    CHECK_THROWS_AS(geometric_fit({4, 5}, {0.1, 0.2}, {0.1, 0.2}), Error);
}

TEST_CASE("cusp sequence rejects bad ranges", "[codim2]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    CHECK_THROWS_AS(cusp_sequence(nl, 20, Symmetry::OffSite, 3, 6), Error);
    CHECK_THROWS_AS(cusp_sequence(nl, 20, Symmetry::OffSite, 6, 5), Error);
    CHECK_THROWS_WITH(cusp_sequence(nl, 8, Symmetry::OffSite, 4, 8), "pattern exceeds domain");
}

TEST_CASE("cusp search away from a cusp does not report one", "[codim2]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const SteadyState p(GridSpec::wedge(6, Symmetry::OffSite), nl);
    const Vector u = newton_solve(p, anti_continuum_pattern(p.grid(), {3, 1}, 0.5, nl).values, 0.5, 1e-3).u;
    CuspOptions o;
    o.newton_iter = 8;
    o.lm_iter = 8;
    o.sectors = {SectorKind::Sign1};
    try {
        const CuspPoint cp = find_cusp(p, u, 0.5, 1e-3, o);
        // Any accepted point must be a genuine double zero eigenvalue.
        CHECK(cp.nullity == 2);
        CHECK(cp.residual_norm <= 1e-8);
    } catch (const Error& e) {
        CHECK((e.kind() == ErrorKind::NoConvergence || e.kind() == ErrorKind::WrongNullity));
    }
}

TEST_CASE("switchback for ubar(4,1) on a small wedge", "[codim2]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const SteadyState p(GridSpec::wedge(10, Symmetry::OffSite), nl);
    const Switchback sb = locate_switchback(p, 4);
    CHECK(sb.d > 0.03);
    CHECK(sb.d < 0.3);
    CHECK(sb.mu > 0.5);
    CHECK(sb.mu < 1.0);
    CHECK(p.residual(sb.u, sb.mu, sb.d).lpNorm<Eigen::Infinity>() <= 1e-9);
    REQUIRE(!sb.sectors.empty());
    CHECK(sb.sectors.front() != SectorKind::Trivial);
}
