#pragma once

#include "snaklat/branch.hpp"
#include "snaklat/error.hpp"
#include "snaklat/lattice.hpp"
#include "snaklat/solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace snaklat {

/// Irreducible representations of D4. Sign1 is +1 on rotations and -1 on reflections,
/// Sign2 keeps the axis reflections, Sign3 keeps the diagonal reflections.
enum class Irrep { Trivial, Sign1, Sign2, Sign3, TwoDim };

inline constexpr std::array<Irrep, 5> all_irreps{Irrep::Trivial, Irrep::Sign1, Irrep::Sign2, Irrep::Sign3,
                                                 Irrep::TwoDim};

inline std::string to_string(Irrep r) {
    switch (r) {
    case Irrep::Trivial: return "Trivial";
    case Irrep::Sign1: return "Sign1";
    case Irrep::Sign2: return "Sign2";
    case Irrep::Sign3: return "Sign3";
    case Irrep::TwoDim: return "TwoDim";
    }
    return "";
}

// Columns follow d4_elements: e, r, r^2, r^3, flip n, flip m, diagonal, antidiagonal.
inline constexpr std::array<std::array<int, 8>, 5> character_table{{
    {1, 1, 1, 1, 1, 1, 1, 1},
    {1, 1, 1, 1, -1, -1, -1, -1},
    {1, -1, 1, -1, 1, 1, -1, -1},
    {1, -1, 1, -1, -1, -1, 1, 1},
    {2, 0, -2, 0, 0, 0, 0, 0},
}};

inline int irrep_dimension(Irrep r) { return r == Irrep::TwoDim ? 2 : 1; }

/// Character-weighted group average of a full-square field.
inline Field isotypic_projection(const Field& v, Irrep r) {
    if (v.grid.kind() != GridKind::FullSquare) throw Error(ErrorKind::Config, "projection expects a full-square field");
    const int s = reflection_offset(v.grid.centering());
    const auto& chi = character_table[static_cast<std::size_t>(r)];
    const double scale = irrep_dimension(r) / 8.0;
    Field out(v.grid);
    for (std::size_t i = 0; i < v.grid.size(); ++i) {
        const Site p = v.grid.site(i);
        double acc = 0.0;
        for (std::size_t g = 0; g < 8; ++g)
            if (chi[g] != 0) acc += chi[g] * v.at(act(d4_elements[g], p, s));
        out.values[static_cast<Eigen::Index>(i)] = scale * acc;
    }
    return out;
}

struct IsotypicReport {
    Irrep tag = Irrep::Trivial;
    std::array<double, 5> norms{};
    /// Share of ||v||^2 carried by the dominant component.
    double fraction = 0.0;
};

inline IsotypicReport isotypic_classify(const Field& v) {
    IsotypicReport rep;
    double total = 0.0;
    for (std::size_t k = 0; k < all_irreps.size(); ++k) {
        rep.norms[k] = isotypic_projection(v, all_irreps[k]).values.norm();
        total += rep.norms[k] * rep.norms[k];
    }
    const auto best = std::max_element(rep.norms.begin(), rep.norms.end()) - rep.norms.begin();
    rep.tag = all_irreps[static_cast<std::size_t>(best)];
    rep.fraction = total > 0.0 ? rep.norms[static_cast<std::size_t>(best)] * rep.norms[static_cast<std::size_t>(best)] / total : 0.0;
    return rep;
}

/// Invariant subspaces on which the symmetric Jacobian block-diagonalizes. The two
/// TwoDim sectors are the fixed spaces of an axis and of a diagonal reflection inside
/// the two-dimensional isotypic component; each carries that component's spectrum once.
enum class SectorKind { Trivial, Sign1, Sign2, Sign3, TwoDimAxis, TwoDimDiagonal };

inline constexpr std::array<SectorKind, 6> all_sectors{SectorKind::Trivial, SectorKind::Sign1,
                                                       SectorKind::Sign2,   SectorKind::Sign3,
                                                       SectorKind::TwoDimAxis, SectorKind::TwoDimDiagonal};

inline std::string to_string(SectorKind k) {
    switch (k) {
    case SectorKind::Trivial: return "Trivial";
    case SectorKind::Sign1: return "Sign1";
    case SectorKind::Sign2: return "Sign2";
    case SectorKind::Sign3: return "Sign3";
    case SectorKind::TwoDimAxis: return "TwoDimAxis";
    case SectorKind::TwoDimDiagonal: return "TwoDimDiagonal";
    }
    return "";
}

inline Irrep sector_irrep(SectorKind k) {
    switch (k) {
    case SectorKind::Trivial: return Irrep::Trivial;
    case SectorKind::Sign1: return Irrep::Sign1;
    case SectorKind::Sign2: return Irrep::Sign2;
    case SectorKind::Sign3: return Irrep::Sign3;
    default: return Irrep::TwoDim;
    }
}

/// How often each sector eigenvalue appears in the full-square spectrum.
inline int sector_multiplicity(SectorKind k) { return sector_irrep(k) == Irrep::TwoDim ? 2 : 1; }

/// Orthonormal basis (columns) of a sector on a symmetric full square.
inline SparseMatrix sector_basis(const GridSpec& full, SectorKind kind) {
    if (full.kind() != GridKind::FullSquare) throw Error(ErrorKind::Config, "sectors live on the full square");
    const int s = reflection_offset(full.centering());
    std::vector<std::pair<D4, int>> group;
    if (kind == SectorKind::TwoDimAxis)
        group = {{D4::Identity, 1}, {D4::FlipN, 1}, {D4::Rot180, -1}, {D4::FlipM, -1}};
    else if (kind == SectorKind::TwoDimDiagonal)
        group = {{D4::Identity, 1}, {D4::Diagonal, 1}, {D4::Rot180, -1}, {D4::AntiDiagonal, -1}};
    else {
        const auto& chi = character_table[static_cast<std::size_t>(sector_irrep(kind))];
        for (std::size_t g = 0; g < 8; ++g) group.emplace_back(d4_elements[g], chi[g]);
    }
    std::vector<char> seen(full.size(), 0);
    std::vector<Triplet> t;
    int col = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (seen[i]) continue;
        const Site p = full.site(i);
        std::vector<std::pair<std::size_t, double>> entries;
        for (auto [g, c] : group) {
            const std::size_t j = full.index(act(g, p, s));
            seen[j] = 1;
            auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == j; });
            if (it == entries.end()) entries.emplace_back(j, c);
            else it->second += c;
        }
        double nrm = 0.0;
        for (const auto& e : entries) nrm += e.second * e.second;
        if (nrm == 0.0) continue;
        nrm = std::sqrt(nrm);
        for (const auto& e : entries)
            if (e.second != 0.0) t.emplace_back(static_cast<int>(e.first), col, e.second / nrm);
        ++col;
    }
    SparseMatrix B(static_cast<Eigen::Index>(full.size()), col);
    B.setFromTriplets(t.begin(), t.end());
    return B;
}

struct Inertia {
    int positive = 0;
    int negative = 0;
    int zero = 0;
};

/// Inertia of a symmetric sparse matrix from the pivots of an LDL^T factorization.
inline Inertia inertia(const SparseMatrix& A) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::FactorizationFailure, "LDL^T factorization failed");
    const Vector D = ldlt.vectorD();
    if (!D.allFinite()) throw Error(ErrorKind::FactorizationFailure, "LDL^T produced non-finite pivots");
    Inertia in;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
        if (D[i] > 0.0) ++in.positive;
        else if (D[i] < 0.0) ++in.negative;
        else ++in.zero;
    }
    return in;
}

inline SparseMatrix shifted(const SparseMatrix& A, double shift) {
    SparseMatrix S(A.rows(), A.cols());
    S.setIdentity();
    return A - shift * S;
}

/// Dense symmetric eigen-decomposition, ascending eigenvalues.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_eigen(const SparseMatrix& A, bool vectors = true) {
    Eigen::MatrixXd M(A);
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
}

struct EigenPair {
    double lambda = 0.0;
    Vector vector;
};

/// The k eigenpairs of a symmetric matrix closest to sigma, by shift-invert subspace
/// iteration with Rayleigh-Ritz (dense solve for small matrices).
inline std::vector<EigenPair> nearest_eigenpairs(const SparseMatrix& A, int k, double sigma, double tol = 1e-10) {
    const Eigen::Index n = A.rows();
    k = static_cast<int>(std::min<Eigen::Index>(k, n));
    std::vector<EigenPair> out;
    if (k <= 0) return out;
    auto take = [&](const Vector& vals, const Eigen::MatrixXd& vecs) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](auto a, auto b) { return std::abs(vals[a] - sigma) < std::abs(vals[b] - sigma); });
        for (int i = 0; i < k; ++i) out.push_back({vals[order[static_cast<std::size_t>(i)]], vecs.col(order[static_cast<std::size_t>(i)])});
    };
    if (n <= 400) {
        auto es = dense_eigen(A);
        take(es.eigenvalues(), es.eigenvectors());
        return out;
    }
    Eigen::SparseLU<SparseMatrix> lu;
    const SparseMatrix S = shifted(A, sigma);
    lu.analyzePattern(S);
    lu.factorize(S);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::FactorizationFailure, "shift-invert factorization failed");
    const Eigen::Index p = std::min<Eigen::Index>(n, k + 8);
    std::mt19937 rng(12345);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = normal(rng);
    const double scale = std::max(1.0, std::abs(sigma));
    Vector theta;
    Eigen::MatrixXd Q;
    for (int it = 0; it < 500; ++it) {
        Eigen::MatrixXd Y(n, p);
        for (Eigen::Index j = 0; j < p; ++j) Y.col(j) = lu.solve(Vector(X.col(j)));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
        Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
        const Eigen::MatrixXd H = Q.transpose() * (A * Q);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
        theta = es.eigenvalues();
        X = Q * es.eigenvectors();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](auto a, auto b) { return std::abs(theta[a] - sigma) < std::abs(theta[b] - sigma); });
        double worst = 0.0;
        for (int i = 0; i < k; ++i) {
            const auto c = order[static_cast<std::size_t>(i)];
            worst = std::max(worst, (A * X.col(c) - theta[c] * X.col(c)).norm());
        }
        if (worst <= tol * scale) break;
    }
    take(theta, X);
    return out;
}

/// The stability domain: the full square behind a wedge problem (or the problem itself).
inline SteadyState full_problem(const SteadyState& p) {
    return SteadyState(unfolded_grid(p.grid()), p.model());
}

/// Lifts a state of `p` to its full square.
inline Vector to_full(const SteadyState& p, const Vector& u) {
    if (p.grid().kind() == GridKind::FullSquare) return u;
    return unfold(Field(p.grid(), u)).values;
}

struct SpectrumOptions {
    double tau_rel = 1e-8;
    /// Near-zero eigenpairs to extract; 0 extracts n_zero of them (if any).
    int pairs = 0;
};

struct TaggedPair {
    double lambda = 0.0;
    Field vector;
    Irrep tag = Irrep::Trivial;
};

struct SpectrumReport {
    int n_unstable = 0;
    int n_zero = 0;
    double tau = 0.0;
    std::vector<TaggedPair> near_zero;
    GridSpec domain;
};

/// Zero tolerance scale: a bound on the spectral radius of the linearization.
inline double spectral_scale(const SteadyState& full, const Vector& U, double mu, double d) {
    return 8.0 * d + full.pointwise(U, mu, 1, 0).lpNorm<Eigen::Infinity>();
}

/// Inertia-based instability count of the linearization on the full square.
/// `full` must be a full-square problem and U a state on it.
inline SpectrumReport unstable_count_full(const SteadyState& full, const Vector& U, double mu, double d,
                                          const SpectrumOptions& opt = {}) {
    if (full.grid().kind() != GridKind::FullSquare) throw Error(ErrorKind::Config, "stability domain must be a full square");
    SpectrumReport rep;
    rep.domain = full.grid();
    rep.tau = opt.tau_rel * spectral_scale(full, U, mu, d);
    const SparseMatrix J = full.jacobian(U, mu, d);
    const Inertia above = inertia(shifted(J, rep.tau));
    const Inertia below = inertia(shifted(J, -rep.tau));
    rep.n_unstable = above.positive;
    rep.n_zero = below.positive - above.positive;
    const int want = opt.pairs > 0 ? opt.pairs : rep.n_zero;
    if (want > 0) {
        for (const EigenPair& e : nearest_eigenpairs(J, want, 0.0)) {
            Field v(full.grid(), e.vector.normalized());
            const Irrep tag = isotypic_classify(v).tag;
            rep.near_zero.push_back({e.lambda, std::move(v), tag});
        }
    }
    return rep;
}

/// Convenience entry point taking a wedge (or full-square) state.
inline SpectrumReport unstable_count(const SteadyState& p, const Vector& u, double mu, double d,
                                     const SpectrumOptions& opt = {}) {
    if (p.grid().kind() == GridKind::FullSquare) return unstable_count_full(p, u, mu, d, opt);
    return unstable_count_full(full_problem(p), to_full(p, u), mu, d, opt);
}

/// Jacobian restricted to a sector: B^T J B.
inline SparseMatrix sector_operator(const SparseMatrix& basis, const SparseMatrix& J_full) {
    SparseMatrix S = basis.transpose() * J_full * basis;
    S.makeCompressed();
    return S;
}

struct CrossingCount {
    /// Eigenvalues changing sign across the arclength window.
    int count = 0;
    int inertia_difference = 0;
    int tracked = 0;
    /// Inertia difference across the two stored points bracketing the fold.
    int immediate = 0;
    std::size_t before = 0;
    std::size_t after = 0;
    double radius = 0.0;
};

/// Eigenvalues changing sign between two states: inertia difference on the full square,
/// cross-checked against per-sector dense spectra (or the full dense spectrum when the
/// grid carries no symmetry).
inline CrossingCount crossing_count_between(const SteadyState& full, const Vector& Ua, double mua, double da,
                                            const Vector& Ub, double mub, double db) {
    CrossingCount c;
    const int na = unstable_count_full(full, Ua, mua, da).n_unstable;
    const int nb = unstable_count_full(full, Ub, mub, db).n_unstable;
    c.inertia_difference = std::abs(nb - na);
    const SparseMatrix Ja = full.jacobian(Ua, mua, da), Jb = full.jacobian(Ub, mub, db);
    auto positives = [](const Vector& ev) { return static_cast<int>((ev.array() > 0.0).count()); };
    if (full.grid().symmetry() == Symmetry::None) {
        c.tracked = std::abs(positives(dense_eigen(Jb, false).eigenvalues()) - positives(dense_eigen(Ja, false).eigenvalues()));
    } else {
        for (SectorKind k : all_sectors) {
            if (k == SectorKind::TwoDimDiagonal) continue;
            const SparseMatrix B = sector_basis(full.grid(), k);
            if (B.cols() == 0) continue;
            const int pa = positives(dense_eigen(sector_operator(B, Ja), false).eigenvalues());
            const int pb = positives(dense_eigen(sector_operator(B, Jb), false).eigenvalues());
            c.tracked += sector_multiplicity(k) * std::abs(pb - pa);
        }
    }
    c.count = c.inertia_difference;
    return c;
}

/// Number of eigenvalues crossing zero near a fold of `branch`: the count across the
/// stored points at arclength distance `radius` on either side (clipped halfway to the
/// neighbouring folds). The radius doubles, up to four times, while the inertia route
/// and the per-sector tracking route disagree.
inline CrossingCount crossing_count_at_fold(const SteadyState& problem, const Branch& branch, const FoldPoint& fold,
                                            double radius = 0.02) {
    const SteadyState full = problem.grid().kind() == GridKind::FullSquare ? problem : full_problem(problem);
    const std::size_t np = branch.points.size();
    const std::size_t i0 = fold.branch_index;
    if (i0 == 0 || i0 + 1 >= np) throw Error(ErrorKind::AmbiguousCrossing, "fold at branch end");

    std::vector<double> s(np, 0.0);
    for (std::size_t k = 1; k < np; ++k) {
        const BranchPoint& a = branch.points[k - 1];
        const BranchPoint& b = branch.points[k];
        const double dp = parameter_value(b, branch.parameter) - parameter_value(a, branch.parameter);
        s[k] = s[k - 1] + std::sqrt((b.u - a.u).squaredNorm() + dp * dp);
    }
    double s_lo = s.front(), s_hi = s.back();
    for (const Event& e : branch.events) {
        if (e.kind != EventKind::Fold || e.index == i0) continue;
        if (e.index < i0) s_lo = std::max(s_lo, 0.5 * (s[e.index] + s[i0]));
        else s_hi = std::min(s_hi, 0.5 * (s[e.index] + s[i0]));
    }
    auto at = [&](std::size_t a, std::size_t b) {
        const BranchPoint& pa = branch.points[a];
        const BranchPoint& pb = branch.points[b];
        return crossing_count_between(full, to_full(problem, pa.u), pa.mu, pa.d, to_full(problem, pb.u), pb.mu, pb.d);
    };
    const int immediate = at(i0 - 1, i0 + 1).inertia_difference;

    CrossingCount last;
    for (int attempt = 0; attempt <= 4; ++attempt, radius *= 2.0) {
        std::size_t a = i0 - 1, b = i0 + 1;
        while (a > 0 && s[a - 1] >= std::max(s_lo, s[i0] - radius)) --a;
        while (b + 1 < np && s[b + 1] <= std::min(s_hi, s[i0] + radius)) ++b;
        last = at(a, b);
        last.before = a;
        last.after = b;
        last.radius = radius;
        last.immediate = immediate;
        if (last.tracked == last.inertia_difference && last.count > 0) return last;
    }
    throw Error(ErrorKind::AmbiguousCrossing, "inertia difference " + std::to_string(last.inertia_difference) +
                                                  " disagrees with tracked count " + std::to_string(last.tracked));
}

}  // namespace snaklat
