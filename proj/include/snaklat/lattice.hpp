#pragma once

#include "snaklat/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace snaklat {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class Symmetry { OffSite, OnSite, None };
enum class GridKind { Wedge, FullSquare };

inline std::string to_string(Symmetry s) {
    switch (s) {
    case Symmetry::OffSite: return "off_site";
    case Symmetry::OnSite: return "on_site";
    case Symmetry::None: return "none";
    }
    return "none";
}

inline std::string to_string(GridKind k) { return k == GridKind::Wedge ? "wedge" : "full_square"; }

struct Site {
    int n = 0;
    int m = 0;
    friend auto operator<=>(const Site&, const Site&) = default;
};

/// Reflection lines sit at n = s/2: s = 1 puts the centre on a plaquette, s = 2 on site (1,1).
inline int reflection_offset(Symmetry s) { return s == Symmetry::OnSite ? 2 : 1; }

/// Elements of the dihedral group of the square, acting about the pattern centre.
enum class D4 { Identity, Rot90, Rot180, Rot270, FlipN, FlipM, Diagonal, AntiDiagonal };

inline constexpr std::array<D4, 8> d4_elements{D4::Identity, D4::Rot90,  D4::Rot180,   D4::Rot270,
                                               D4::FlipN,    D4::FlipM,  D4::Diagonal, D4::AntiDiagonal};

inline Site act(D4 g, Site p, int s) {
    switch (g) {
    case D4::Identity: return p;
    case D4::Rot90: return {s - p.m, p.n};
    case D4::Rot180: return {s - p.n, s - p.m};
    case D4::Rot270: return {p.m, s - p.n};
    case D4::FlipN: return {s - p.n, p.m};
    case D4::FlipM: return {p.n, s - p.m};
    case D4::Diagonal: return {p.m, p.n};
    case D4::AntiDiagonal: return {s - p.m, s - p.n};
    }
    return p;
}

/// Images of a site under the symmetry group, without repeats.
inline std::vector<Site> orbit(Site p, Symmetry sym) {
    std::vector<Site> out;
    if (sym == Symmetry::None) {
        out.push_back(p);
        return out;
    }
    const int s = reflection_offset(sym);
    for (D4 g : d4_elements) {
        Site q = act(g, p, s);
        if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline int orbit_size(Site p, Symmetry sym) { return static_cast<int>(orbit(p, sym).size()); }

/// Computational domain. Wedge grids hold {1 <= m <= n <= nd}; full squares hold
/// [lo, nd]^2 with lo = 1 - nd (off-site centring) or 2 - nd (on-site centring).
/// Flat indices are row-major in (n, m).
class GridSpec {
public:
    GridSpec() = default;

    static GridSpec wedge(int nd, Symmetry sym) {
        if (nd < 1) throw Error(ErrorKind::Config, "grid N_d must be positive");
        if (sym == Symmetry::None) throw Error(ErrorKind::Config, "wedge grid requires a symmetry class");
        return GridSpec(GridKind::Wedge, nd, sym, sym);
    }

    /// `centering` fixes the index range when `sym` is None.
    static GridSpec full_square(int nd, Symmetry sym, Symmetry centering = Symmetry::OffSite) {
        if (nd < 1) throw Error(ErrorKind::Config, "grid N_d must be positive");
        if (sym != Symmetry::None) centering = sym;
        if (centering == Symmetry::None) centering = Symmetry::OffSite;
        return GridSpec(GridKind::FullSquare, nd, sym, centering);
    }

    GridKind kind() const { return kind_; }
    int nd() const { return nd_; }
    Symmetry symmetry() const { return symmetry_; }
    Symmetry centering() const { return centering_; }
    int lo() const { return kind_ == GridKind::Wedge ? 1 : reflection_offset(centering_) - nd_; }
    int hi() const { return nd_; }
    int side() const { return hi() - lo() + 1; }

    std::size_t size() const {
        if (kind_ == GridKind::Wedge) return static_cast<std::size_t>(nd_) * (nd_ + 1) / 2;
        return static_cast<std::size_t>(side()) * side();
    }

    bool contains(Site p) const {
        if (kind_ == GridKind::Wedge) return p.m >= 1 && p.m <= p.n && p.n <= nd_;
        return p.n >= lo() && p.n <= hi() && p.m >= lo() && p.m <= hi();
    }

    std::size_t index(Site p) const {
        if (!contains(p)) throw Error(ErrorKind::Config, "site outside grid");
        if (kind_ == GridKind::Wedge)
            return static_cast<std::size_t>(p.n) * (p.n - 1) / 2 + static_cast<std::size_t>(p.m - 1);
        return static_cast<std::size_t>(p.n - lo()) * side() + static_cast<std::size_t>(p.m - lo());
    }

    Site site(std::size_t i) const {
        if (kind_ == GridKind::Wedge) {
            int n = static_cast<int>((std::sqrt(8.0 * static_cast<double>(i) + 1.0) + 1.0) / 2.0);
            while (static_cast<std::size_t>(n) * (n - 1) / 2 > i) --n;
            while (static_cast<std::size_t>(n + 1) * n / 2 <= i) ++n;
            return {n, static_cast<int>(i - static_cast<std::size_t>(n) * (n - 1) / 2) + 1};
        }
        const int w = side();
        return {lo() + static_cast<int>(i) / w, lo() + static_cast<int>(i) % w};
    }

    /// Maps an out-of-domain neighbour back into the domain: symmetry folding on the
    /// wedge edges, mirror ghost cells on the outer Neumann boundary.
    Site resolve(Site p) const {
        if (kind_ == GridKind::Wedge) {
            const int s = reflection_offset(symmetry_);
            for (;;) {
                if (p.n < 1) { p.n = s - p.n; continue; }
                if (p.m < 1) { p.m = s - p.m; continue; }
                if (p.m > p.n) { std::swap(p.n, p.m); continue; }
                if (p.n > nd_) { p.n = 2 * nd_ + 1 - p.n; continue; }
                return p;
            }
        }
        auto mirror = [&](int x) {
            if (x > hi()) return 2 * hi() + 1 - x;
            if (x < lo()) return 2 * lo() - 1 - x;
            return x;
        };
        return {mirror(p.n), mirror(p.m)};
    }

    std::array<std::size_t, 4> neighbours(std::size_t i) const {
        const Site p = site(i);
        return {index(resolve({p.n + 1, p.m})), index(resolve({p.n - 1, p.m})), index(resolve({p.n, p.m + 1})),
                index(resolve({p.n, p.m - 1}))};
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;

private:
    GridSpec(GridKind kind, int nd, Symmetry sym, Symmetry centering)
        : kind_(kind), nd_(nd), symmetry_(sym), centering_(centering) {}

    GridKind kind_ = GridKind::Wedge;
    int nd_ = 1;
    Symmetry symmetry_ = Symmetry::OffSite;
    Symmetry centering_ = Symmetry::OffSite;
};

struct Field {
    GridSpec grid;
    Vector values;

    Field() = default;
    Field(GridSpec g, Vector v) : grid(g), values(std::move(v)) {
        if (static_cast<std::size_t>(values.size()) != grid.size())
            throw Error(ErrorKind::Config, "field length does not match grid size");
    }
    explicit Field(GridSpec g) : grid(g), values(Vector::Zero(static_cast<Eigen::Index>(g.size()))) {}

    double& at(Site p) { return values[static_cast<Eigen::Index>(grid.index(p))]; }
    double at(Site p) const { return values[static_cast<Eigen::Index>(grid.index(p))]; }
    bool finite() const { return values.allFinite(); }
};

/// Orbit sizes on the wedge (ones on the full square). The wedge Laplacian is
/// self-adjoint in the inner product weighted by these.
inline Vector orbit_weights(const GridSpec& g) {
    Vector w = Vector::Ones(static_cast<Eigen::Index>(g.size()));
    if (g.kind() == GridKind::Wedge)
        for (std::size_t i = 0; i < g.size(); ++i)
            w[static_cast<Eigen::Index>(i)] = orbit_size(g.site(i), g.symmetry());
    return w;
}

inline SparseMatrix laplacian_matrix(const GridSpec& g) {
    const std::size_t n = g.size();
    std::vector<Triplet> t;
    t.reserve(5 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<int>(i);
        t.emplace_back(row, row, -4.0);
        for (std::size_t j : g.neighbours(i)) t.emplace_back(row, static_cast<int>(j), 1.0);
    }
    SparseMatrix L(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

inline Vector laplacian_apply(const GridSpec& g, const Vector& u) {
    Vector out(u.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double acc = -4.0 * u[static_cast<Eigen::Index>(i)];
        for (std::size_t j : g.neighbours(i)) acc += u[static_cast<Eigen::Index>(j)];
        out[static_cast<Eigen::Index>(i)] = acc;
    }
    return out;
}

inline Field laplacian_apply(const Field& u) { return Field(u.grid, laplacian_apply(u.grid, u.values)); }

/// Full square carrying the same symmetry and half-width as a wedge grid.
inline GridSpec unfolded_grid(const GridSpec& wedge) {
    if (wedge.kind() != GridKind::Wedge) return wedge;
    return GridSpec::full_square(wedge.nd(), wedge.symmetry());
}

/// Sparse 0/1 matrix E with unfold(u) = E u.
inline SparseMatrix unfold_matrix(const GridSpec& wedge) {
    if (wedge.kind() != GridKind::Wedge) throw Error(ErrorKind::Config, "unfold expects a wedge grid");
    const GridSpec full = unfolded_grid(wedge);
    std::vector<Triplet> t;
    t.reserve(full.size());
    for (std::size_t i = 0; i < full.size(); ++i)
        t.emplace_back(static_cast<int>(i), static_cast<int>(wedge.index(wedge.resolve(full.site(i)))), 1.0);
    SparseMatrix E(static_cast<Eigen::Index>(full.size()), static_cast<Eigen::Index>(wedge.size()));
    E.setFromTriplets(t.begin(), t.end());
    return E;
}

inline Field unfold(const Field& u) {
    if (u.grid.kind() != GridKind::Wedge) throw Error(ErrorKind::Config, "unfold expects a wedge field");
    const GridSpec full = unfolded_grid(u.grid);
    Field out(full);
    for (std::size_t i = 0; i < full.size(); ++i)
        out.values[static_cast<Eigen::Index>(i)] = u.at(u.grid.resolve(full.site(i)));
    return out;
}

/// Restriction of a full-square field to the wedge (inverse of unfold on symmetric fields).
inline Field fold(const Field& u, Symmetry sym) {
    if (u.grid.kind() != GridKind::FullSquare) throw Error(ErrorKind::Config, "fold expects a full-square field");
    if (sym == Symmetry::None) throw Error(ErrorKind::Config, "fold requires a symmetry class");
    if (u.grid.centering() != sym) throw Error(ErrorKind::Config, "fold: symmetry does not match grid centring");
    const GridSpec w = GridSpec::wedge(u.grid.nd(), sym);
    Field out(w);
    for (std::size_t i = 0; i < w.size(); ++i) out.values[static_cast<Eigen::Index>(i)] = u.at(w.site(i));
    return out;
}

/// Largest deviation of a full-square field from its images under the group.
inline double symmetry_defect(const Field& u) {
    const int s = reflection_offset(u.grid.centering());
    double worst = 0.0;
    for (std::size_t i = 0; i < u.grid.size(); ++i) {
        const Site p = u.grid.site(i);
        for (D4 g : d4_elements)
            worst = std::max(worst, std::abs(u.values[static_cast<Eigen::Index>(i)] - u.at(act(g, p, s))));
    }
    return worst;
}

}  // namespace snaklat
