#include "snaklat/lattice.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <set>

using namespace snaklat;

namespace {

Vector random_vector(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    return v;
}

// Symmetric extension of a wedge field to all of Z^2, written from the reflection
// definitions: fold each coordinate into [1, nd] (centre, then Neumann mirror), then sort.
double extended(const Field& u, int n, int m) {
    const int s = reflection_offset(u.grid.symmetry());
    const int nd = u.grid.nd();
    auto fold1 = [&](int x) {
        for (;;) {
            if (x < 1) x = s - x;
            else if (x > nd) x = 2 * nd + 1 - x;
            else return x;
        }
    };
    int a = fold1(n), b = fold1(m);
    if (b > a) std::swap(a, b);
    return u.at({a, b});
}

double stencil(const Field& u, int n, int m) {
    return extended(u, n + 1, m) + extended(u, n - 1, m) + extended(u, n, m + 1) + extended(u, n, m - 1) -
           4.0 * extended(u, n, m);
}

const std::vector<GridSpec> all_grids() {
    std::vector<GridSpec> g;
    for (int nd : {1, 2, 3, 5, 8})
        for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
            g.push_back(GridSpec::wedge(nd, s));
            g.push_back(GridSpec::full_square(nd, s));
        }
    g.push_back(GridSpec::full_square(4, Symmetry::None));
    g.push_back(GridSpec::full_square(4, Symmetry::None, Symmetry::OnSite));
    return g;
}

}  // namespace

TEST_CASE("grid sizes and index bijection", "[lattice]") {
    for (int nd : {1, 4, 7}) {
        CHECK(GridSpec::wedge(nd, Symmetry::OffSite).size() == static_cast<std::size_t>(nd * (nd + 1) / 2));
        CHECK(GridSpec::full_square(nd, Symmetry::OffSite).size() == static_cast<std::size_t>(4 * nd * nd));
        CHECK(GridSpec::full_square(nd, Symmetry::OnSite).size() == static_cast<std::size_t>((2 * nd - 1) * (2 * nd - 1)));
    }
    for (const GridSpec& g : all_grids()) {
        std::set<Site> seen;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Site p = g.site(i);
            CHECK(g.contains(p));
            CHECK(g.index(p) == i);
            seen.insert(p);
        }
        CHECK(seen.size() == g.size());
    }
}

TEST_CASE("wedge without symmetry is rejected", "[lattice]") {
    CHECK_THROWS_AS(GridSpec::wedge(4, Symmetry::None), Error);
    CHECK_THROWS_AS(GridSpec::wedge(0, Symmetry::OffSite), Error);
}

TEST_CASE("laplacian of a constant vanishes", "[lattice]") {
    for (const GridSpec& g : all_grids()) {
        const Vector c = Vector::Constant(static_cast<Eigen::Index>(g.size()), 2.75);
        CHECK(laplacian_apply(g, c).lpNorm<Eigen::Infinity>() == 0.0);
        const SparseMatrix L = laplacian_matrix(g);
        CHECK((L * Vector::Ones(L.cols())).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("impulse response at (3,2) on the off-site wedge", "[lattice]") {
    const GridSpec g = GridSpec::wedge(5, Symmetry::OffSite);
    const SparseMatrix L = laplacian_matrix(g);
    const auto row = static_cast<Eigen::Index>(g.index({3, 2}));
    auto coeff = [&](Site q) { return L.coeff(row, static_cast<Eigen::Index>(g.index(q))); };
    CHECK(coeff({3, 2}) == -4.0);
    CHECK(coeff({4, 2}) == 1.0);
    CHECK(coeff({2, 2}) == 1.0);
    CHECK(coeff({3, 3}) == 1.0);
    CHECK(coeff({3, 1}) == 1.0);
    Field e(g);
    e.at({3, 2}) = 1.0;
    const Field r = laplacian_apply(e);
    CHECK(r.at({3, 2}) == -4.0);
    CHECK(r.at({4, 2}) == 1.0);
    // (2,2) also sees (3,2) through its mirror image (2,3).
    CHECK(r.at({2, 2}) == 2.0);
    CHECK(r.at({3, 1}) == 1.0);
}

TEST_CASE("edge rows of the wedge stencil", "[lattice]") {
    const GridSpec off = GridSpec::wedge(6, Symmetry::OffSite);
    const SparseMatrix Loff = laplacian_matrix(off);
    for (int n = 2; n < 6; ++n) {
        const auto i = static_cast<Eigen::Index>(off.index({n, 1}));
        CHECK(Loff.coeff(i, i) == -3.0);
    }
    const GridSpec on = GridSpec::wedge(6, Symmetry::OnSite);
    const SparseMatrix Lon = laplacian_matrix(on);
    for (int n = 3; n < 6; ++n) {
        const auto i = static_cast<Eigen::Index>(on.index({n, 1}));
        CHECK(Lon.coeff(i, static_cast<Eigen::Index>(on.index({n, 2}))) == 2.0);
        CHECK(Lon.coeff(i, i) == -4.0);
    }
    const auto c = static_cast<Eigen::Index>(on.index({1, 1}));
    CHECK(Lon.coeff(c, static_cast<Eigen::Index>(on.index({2, 1}))) == 4.0);
}

TEST_CASE("wedge laplacian matches the stencil on the symmetric extension", "[lattice]") {
    unsigned seed = 1;
    for (int nd : {1, 2, 3, 6, 9})
        for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
            const GridSpec g = GridSpec::wedge(nd, s);
            const Field u(g, random_vector(g.size(), seed++));
            const Field r = laplacian_apply(u);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Site p = g.site(i);
                CHECK(r.at(p) == Catch::Approx(stencil(u, p.n, p.m)).margin(1e-14));
            }
        }
}

TEST_CASE("orbit-weighted wedge laplacian is symmetric", "[lattice]") {
    for (const GridSpec& g : all_grids()) {
        const SparseMatrix L = laplacian_matrix(g);
        const SparseMatrix WL = orbit_weights(g).asDiagonal() * L;
        const SparseMatrix D = WL - SparseMatrix(WL.transpose());
        CHECK(D.norm() == 0.0);
        if (g.kind() == GridKind::FullSquare) CHECK((L - SparseMatrix(L.transpose())).norm() == 0.0);
    }
}

TEST_CASE("orbit sizes", "[lattice]") {
    CHECK(orbit_size({3, 3}, Symmetry::OffSite) == 4);
    CHECK(orbit_size({3, 1}, Symmetry::OffSite) == 8);
    CHECK(orbit_size({1, 1}, Symmetry::OnSite) == 1);
    CHECK(orbit_size({1, 1}, Symmetry::OffSite) == 4);
    CHECK(orbit_size({3, 1}, Symmetry::OnSite) == 4);
    for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
        const GridSpec g = GridSpec::wedge(7, s);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Site p = g.site(i);
            const int k = orbit_size(p, s);
            CHECK(8 % k == 0);
            if (p.n == p.m && !(s == Symmetry::OnSite && p.n == 1)) CHECK(k == 4);
            if (s == Symmetry::OffSite && p.m < p.n) CHECK(k == 8);
        }
    }
}

TEST_CASE("reflection generators are involutions", "[lattice]") {
    for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
        const int o = reflection_offset(s);
        for (int n = -6; n <= 6; ++n)
            for (int m = -6; m <= 6; ++m)
                for (D4 g : {D4::FlipN, D4::FlipM, D4::Diagonal, D4::AntiDiagonal, D4::Rot180}) {
                    const Site p{n, m};
                    CHECK(act(g, act(g, p, o), o) == p);
                }
    }
    CHECK(act(D4::FlipN, {3, 2}, 1) == Site{-2, 2});
    CHECK(act(D4::FlipN, {3, 2}, 2) == Site{-1, 2});
}

TEST_CASE("unfold examples", "[lattice]") {
    {
        Field u(GridSpec::wedge(2, Symmetry::OffSite));
        u.at({1, 1}) = 1.0;
        const Field U = unfold(u);
        std::set<Site> ones;
        for (std::size_t i = 0; i < U.grid.size(); ++i)
            if (U.values[static_cast<Eigen::Index>(i)] == 1.0) ones.insert(U.grid.site(i));
        CHECK(ones == std::set<Site>{{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    }
    {
        Field u(GridSpec::wedge(3, Symmetry::OffSite));
        u.at({2, 1}) = 1.0;
        CHECK(unfold(u).values.sum() == 8.0);
    }
    {
        Field u(GridSpec::wedge(3, Symmetry::OnSite));
        u.at({2, 1}) = 1.0;
        const Field U = unfold(u);
        std::set<Site> ones;
        for (std::size_t i = 0; i < U.grid.size(); ++i)
            if (U.values[static_cast<Eigen::Index>(i)] == 1.0) ones.insert(U.grid.site(i));
        CHECK(ones == std::set<Site>{{2, 1}, {0, 1}, {1, 2}, {1, 0}});
    }
}

TEST_CASE("fold and unfold round trip, laplacian commutes with unfold", "[lattice]") {
    unsigned seed = 100;
    for (int nd : {1, 2, 4, 7})
        for (Symmetry s : {Symmetry::OffSite, Symmetry::OnSite}) {
            const GridSpec g = GridSpec::wedge(nd, s);
            const Field u(g, random_vector(g.size(), seed++));
            const Field U = unfold(u);
            CHECK(symmetry_defect(U) == 0.0);
            CHECK(fold(U, s).values == u.values);
            CHECK(unfold(fold(U, s)).values == U.values);
            const Vector lhs = unfold(laplacian_apply(u)).values;
            const Vector rhs = laplacian_apply(U).values;
            CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-14);
            CHECK((unfold_matrix(g) * u.values - U.values).lpNorm<Eigen::Infinity>() == 0.0);
        }
}

TEST_CASE("fold rejects mismatched symmetry", "[lattice]") {
    const Field U(GridSpec::full_square(3, Symmetry::OffSite));
    CHECK_THROWS_AS(fold(U, Symmetry::None), Error);
    CHECK_THROWS_AS(fold(U, Symmetry::OnSite), Error);
    const Field w(GridSpec::wedge(3, Symmetry::OffSite));
    CHECK_THROWS_AS(fold(w, Symmetry::OffSite), Error);
    CHECK_THROWS_AS(unfold(U), Error);
}
