#include "snaklat/continuation.hpp"
#include "snaklat/studies.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace snaklat;

namespace {

// f = r^2 - (u - 1)^2 - (mu - 1/2)^2 on a single site: a circle of radius r = 0.2 with
// folds at mu = 0.3 and mu = 0.7.
Nonlinearity circle() {
    return Nonlinearity::polynomial({{0, 2, -1.0}, {0, 1, 2.0}, {2, 0, -1.0}, {1, 0, 1.0}, {0, 0, -1.21}});
}

StepConfig snake_step() {
    StepConfig c;
    c.h_max = 0.005;
    c.max_points = 4000;
    c.p_min = -0.05;
    c.p_max = 1.05;
    return c;
}

bool has_fold(const Branch& b) {
    for (const Event& e : b.events)
        if (e.kind == EventKind::Fold) return true;
    return false;
}

void check_points(const SteadyState& p, const Branch& b, double h_min) {
    for (std::size_t k = 0; k < b.points.size(); ++k) {
        const BranchPoint& bp = b.points[k];
        CHECK(p.residual(bp.u, bp.mu, bp.d).lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK(std::abs(bp.tangent.norm() - 1.0) < 1e-12);
        CHECK(bp.norm == Catch::Approx(to_full(p, bp.u).norm()).epsilon(1e-12));
        if (k > 0) {
            const BranchPoint& a = b.points[k - 1];
            const double dp = parameter_value(bp, b.parameter) - parameter_value(a, b.parameter);
            CHECK(std::sqrt((bp.u - a.u).squaredNorm() + dp * dp) >= h_min);
        }
    }
}

}  // namespace

TEST_CASE("closed curve is traced and its folds refined exactly", "[continuation]") {
    const SteadyState p(GridSpec::wedge(1, Symmetry::OffSite), circle());
    Vector u(1);
    u << 1.2;
    StepConfig c;
    c.h_max = 0.02;
    c.max_points = 2000;
    const Branch b = trace_isola(p, make_point(p, u, 0.5, 0.0), Parameter::Mu, c);
    CHECK(b.closed);
    CHECK(b.points.size() > 20);
    for (const BranchPoint& bp : b.points) {
        const double r2 = (bp.u[0] - 1.0) * (bp.u[0] - 1.0) + (bp.mu - 0.5) * (bp.mu - 0.5);
        CHECK(std::abs(r2 - 0.04) < 1e-10);
    }
    const auto folds = detect_and_refine_folds(p, b);
    REQUIRE(folds.size() == 2);
    std::vector<double> mus;
    for (const FoldPoint& f : folds) {
        CHECK(f.refined);
        CHECK(f.u[0] == Catch::Approx(1.0).margin(1e-10));
        mus.push_back(f.mu);
    }
    std::sort(mus.begin(), mus.end());
    CHECK(mus[0] == Catch::Approx(0.3).margin(1e-10));
    CHECK(mus[1] == Catch::Approx(0.7).margin(1e-10));
}

TEST_CASE("snaking branch from ubar(1,1) turns at both window ends", "[continuation]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(6, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const double d = 1e-3;
    Vector u = anti_continuum_pattern(g, {1, 1}, 0.5, nl).values;
    u = natural_continuation(p, u, 0.5, 0.0, Parameter::D, d, 10);

    for (int dir : {-1, 1}) {
        StepConfig c = snake_step();
        c.direction = dir;
        c.stop = has_fold;
        const Branch b = continue_branch(p, make_point(p, u, 0.5, d), Parameter::Mu, c);
        check_points(p, b, c.h_min);
        const auto folds = detect_and_refine_folds(p, b);
        REQUIRE(folds.size() == 1);
        const FoldPoint& f = folds.front();
        REQUIRE(f.refined);
        CHECK(f.residual_norm <= 1e-10);
        CHECK(f.null_residual <= 1e-8);
        CHECK((p.jacobian(f.u, f.mu, f.d) * f.phi).lpNorm<Eigen::Infinity>() <= 1e-8);
        if (dir < 0) {
            // Corner ending: mu = 3 d^(2/3) to leading order in normal-form units (d/4, mu/4).
            const double pred = 4.0 * 3.0 / std::cbrt(4.0) * std::pow(d / 4.0, 2.0 / 3.0);
            CHECK(f.mu > 0.0);
            CHECK(std::abs(f.mu - pred) < 0.25 * pred);
        } else {
            CHECK(std::abs(f.mu - (1.0 - 2.0 * d)) <= 5.0 * std::pow(d, 1.5));
        }
    }
}

TEST_CASE("small d branch points approach the anti-continuum pattern", "[continuation]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(6, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const Vector u0 = anti_continuum_pattern(g, {3, 2}, 0.5, nl).values;
    for (double d : {1e-6, 1e-5, 1e-4}) {
        StepConfig c;
        c.max_points = 5;
        c.h_max = 1e-3;
        const Branch b = continue_branch(p, make_point(p, u0, 0.5, d), Parameter::Mu, c);
        const double dev = (b.points.front().u - u0).lpNorm<Eigen::Infinity>();
        CHECK(dev > 0.0);
        CHECK(dev < 10.0 * d);
    }
}

TEST_CASE("continuation in d", "[continuation]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(6, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const Vector u0 = anti_continuum_pattern(g, {2, 1}, 0.8, nl).values;
    StepConfig c;
    c.h_max = 0.01;
    c.max_points = 300;
    c.p_min = 0.0;
    c.p_max = 0.5;
    c.stop = has_fold;
    const Branch b = continue_branch(p, make_point(p, u0, 0.8, 0.0), Parameter::D, c);
    check_points(p, b, c.h_min);
    for (const BranchPoint& bp : b.points) CHECK(bp.mu == 0.8);
    const auto folds = detect_and_refine_folds(p, b);
    REQUIRE(!folds.empty());
    CHECK(folds.front().refined);
    CHECK(folds.front().d > 0.0);
    CHECK((p.jacobian(folds.front().u, 0.8, folds.front().d) * folds.front().phi).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("branch switching", "[continuation]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(5, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const double d = 1e-3;
    const Vector u = newton_solve(p, anti_continuum_pattern(g, {3, 1}, 0.5, nl).values, 0.5, d).u;
    const SteadyState full(GridSpec::full_square(5, Symmetry::None), nl);
    const Vector U = to_full(p, u);
    const Vector psi = Vector::Random(U.size()).normalized();

    const BranchPoint same = switch_branch(full, U, 0.5, d, psi, 0.0);
    CHECK(same.u == U);
    CHECK(same.mu == 0.5);

    // A symmetric direction on a regular point only slides along the symmetric branch.
    const Vector sym = U.normalized();
    const BranchPoint s = switch_branch(full, U, 0.5, d, sym, 1e-2);
    CHECK(full.residual(s.u, s.mu, d).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK(symmetry_defect(Field(full.grid(), s.u)) < 1e-8);
    CHECK(std::abs(sym.dot(s.u - U) - 1e-2) < 1e-12);
}

TEST_CASE("primary snaking branch is not closed", "[continuation]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(5, Symmetry::OffSite);
    const SteadyState p(g, nl);
    const Vector u = newton_solve(p, anti_continuum_pattern(g, {1, 1}, 0.5, nl).values, 0.5, 1e-3).u;
    StepConfig c = snake_step();
    c.max_points = 800;
    const Branch b = trace_isola(p, make_point(p, u, 0.5, 1e-3), Parameter::Mu, c);
    CHECK(!b.closed);
    CHECK(b.end_reason.find("no closure") != std::string::npos);
}

TEST_CASE("snake study outside the window ends immediately", "[continuation]") {
    const SteadyState p(GridSpec::wedge(5, Symmetry::OffSite), builtin_nonlinearity(Family::CubicQuintic));
    SnakeOptions o;
    o.mu_min = 1.2;
    o.mu_max = 1.4;
    const SnakeResult r = snake_study(p, o);
    CHECK(r.folds.empty());
    REQUIRE(!r.branch.events.empty());
    CHECK(r.branch.events.back().kind == EventKind::End);
    CHECK(r.branch.end_reason == "outside bistable window");
    o = {};
    o.n_max = 6;
    CHECK_THROWS_WITH(snake_study(p, o), "pattern exceeds domain");
}
