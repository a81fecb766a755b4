#include "snaklat/dynamics.hpp"
#include "snaklat/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace snaklat;

namespace {

struct Setup {
    Nonlinearity nl = builtin_nonlinearity(Family::CubicQuintic);
    GridSpec wedge = GridSpec::wedge(6, Symmetry::OffSite);
    SteadyState prob{wedge, nl};
    SteadyState full = full_problem(prob);
};

Vector noise(Eigen::Index n, unsigned seed, double a) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-a, a);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

}  // namespace

TEST_CASE("equilibrium stays put", "[dynamics]") {
    Setup s;
    const Vector u = newton_solve(s.prob, anti_continuum_pattern(s.wedge, {2, 1}, 0.5, s.nl).values, 0.5, 1e-3).u;
    const Vector U = to_full(s.prob, u);
    const Trajectory tr = integrate(s.full, U, 0.5, 1e-3, 50.0, {}, &U);
    // Drift stays at the integrator tolerance floor (rtol 1e-8 on O(1) states).
    for (double dev : tr.deviation) CHECK(dev < 1e-7);
    for (std::size_t k = 1; k < tr.times.size(); ++k) CHECK(tr.times[k] > tr.times[k - 1]);
}

TEST_CASE("stable state absorbs a small perturbation", "[dynamics]") {
    Setup s;
    const Vector u = newton_solve(s.prob, anti_continuum_pattern(s.wedge, {3, 2}, 0.5, s.nl).values, 0.5, 1e-3).u;
    const Vector U = to_full(s.prob, u);
    const Vector U0 = U + noise(U.size(), 7, 1e-3);
    const Trajectory tr = integrate(s.full, U0, 0.5, 1e-3, 200.0, {}, &U);
    CHECK(tr.deviation.back() < 1e-6);
    // Decay above the tolerance floor runs at the spectral gap.
    const double gap = dense_eigen(s.full.jacobian(U, 0.5, 1e-3), false).eigenvalues().maxCoeff();
    REQUIRE(gap < 0.0);
    CHECK(std::abs(growth_rate(tr, 1e-7, 1e-4) - gap) <= 0.1 * std::abs(gap));
}

TEST_CASE("unstable growth rate matches the leading eigenvalue", "[dynamics]") {
    Setup s;
    const Vector v = newton_solve(s.prob, anti_continuum_pattern(s.wedge, {3, 2, Variant::VBar}, 0.5, s.nl).values, 0.5, 1e-3).u;
    const Vector V = to_full(s.prob, v);
    const auto es = dense_eigen(s.full.jacobian(V, 0.5, 1e-3));
    Eigen::Index k;
    const double lambda = es.eigenvalues().maxCoeff(&k);
    REQUIRE(lambda > 0.0);
    const Vector V0 = V + 1e-6 * Vector(es.eigenvectors().col(k));
    const Trajectory tr = integrate(s.full, V0, 0.5, 1e-3, 12.0, {}, &V);
    CHECK(std::abs(growth_rate(tr, 1e-5, 1e-3) - lambda) <= 0.1 * lambda);
}

TEST_CASE("odd symmetry of the cubic-quintic flow", "[dynamics]") {
    Setup s;
    const Vector U0 = noise(static_cast<Eigen::Index>(s.full.size()), 3, 1.2);
    const Trajectory a = integrate(s.full, U0, 0.4, 0.05, 5.0);
    const Trajectory b = integrate(s.full, Vector(-U0), 0.4, 0.05, 5.0);
    REQUIRE(a.states.size() == b.states.size());
    CHECK((a.states.back() + b.states.back()).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("halving tolerances changes the endpoint by less than ten tolerances", "[dynamics]") {
    Setup s;
    const Vector U0 = noise(static_cast<Eigen::Index>(s.full.size()), 5, 1.2);
    DynamicsConfig c;
    const Vector a = integrate(s.full, U0, 0.4, 0.05, 5.0, c).states.back();
    c.atol *= 0.5;
    c.rtol *= 0.5;
    const Vector b = integrate(s.full, U0, 0.4, 0.05, 5.0, c).states.back();
    const double scale = std::max(1.0, a.lpNorm<Eigen::Infinity>());
    CHECK((a - b).lpNorm<Eigen::Infinity>() < 10.0 * (DynamicsConfig{}.atol + DynamicsConfig{}.rtol * scale));
}

TEST_CASE("implicit Euler fallback converges to the same equilibrium", "[dynamics]") {
    Setup s;
    const Vector u = newton_solve(s.prob, anti_continuum_pattern(s.wedge, {2, 2}, 0.5, s.nl).values, 0.5, 1e-3).u;
    const Vector U = to_full(s.prob, u);
    DynamicsConfig c;
    c.implicit = true;
    c.dt = 0.1;
    const Trajectory tr = integrate(s.full, U + noise(U.size(), 9, 1e-3), 0.5, 1e-3, 100.0, c, &U);
    CHECK(tr.deviation.back() < 1e-6);
}

TEST_CASE("integration and fitting errors", "[dynamics]") {
    Setup s;
    const Vector U = Vector::Zero(static_cast<Eigen::Index>(s.full.size()));
    CHECK_THROWS_AS(integrate(s.full, U, 0.5, 1e-3, 0.0), Error);
    DynamicsConfig c;
    c.stride = 0;
    CHECK_THROWS_AS(integrate(s.full, U, 0.5, 1e-3, 1.0, c), Error);
    Trajectory tr;
    tr.times = {0.0, 1.0};
    tr.deviation = {1e-3, 1e-4};
    CHECK_THROWS_AS(growth_rate(tr, 1e-6, 1e-2), Error);
    Trajectory syn;
    for (int k = 0; k < 20; ++k) {
        syn.times.push_back(0.5 * k);
        syn.deviation.push_back(1e-6 * std::exp(0.3 * 0.5 * k));
    }
    CHECK(growth_rate(syn, 1e-7, 1.0) == Catch::Approx(0.3).epsilon(1e-12));
}
