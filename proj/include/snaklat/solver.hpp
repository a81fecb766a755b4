#pragma once

#include "snaklat/error.hpp"
#include "snaklat/lattice.hpp"
#include "snaklat/model.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <ostream>
#include <utility>
#include <vector>

namespace snaklat {

/// F(u, mu, d) = d * Lap(u) + f(u, mu) on one grid.
class SteadyState {
public:
    SteadyState(GridSpec grid, Nonlinearity nl)
        : grid_(grid), nl_(std::move(nl)), lap_(laplacian_matrix(grid_)), weights_(orbit_weights(grid_)) {}

    const GridSpec& grid() const { return grid_; }
    const Nonlinearity& model() const { return nl_; }
    const SparseMatrix& laplacian() const { return lap_; }
    /// Orbit weights W; W * J is symmetric for every Jacobian J of this problem.
    const Vector& weights() const { return weights_; }
    std::size_t size() const { return grid_.size(); }

    Vector residual(const Vector& u, double mu, double d) const {
        Vector r = d * (lap_ * u);
        for (Eigen::Index i = 0; i < u.size(); ++i) r[i] += nl_.f(u[i], mu);
        return r;
    }

    Field residual(const Field& u, double mu, double d) const { return Field(u.grid, residual(u.values, mu, d)); }

    /// Pointwise derivative map: out_i = d^a/du^a d^b/dmu^b f(u_i, mu).
    Vector pointwise(const Vector& u, double mu, int a, int b) const {
        Vector out(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = nl_.derivative(u[i], mu, a, b);
        return out;
    }

    SparseMatrix jacobian(const Vector& u, double mu, double d) const {
        SparseMatrix J = d * lap_;
        const Vector fu = pointwise(u, mu, 1, 0);
        for (Eigen::Index i = 0; i < u.size(); ++i) J.coeffRef(i, i) += fu[i];
        J.makeCompressed();
        return J;
    }

    Vector d_mu(const Vector& u, double mu) const { return pointwise(u, mu, 0, 1); }
    Vector d_d(const Vector& u) const { return lap_ * u; }

private:
    GridSpec grid_;
    Nonlinearity nl_;
    SparseMatrix lap_;
    Vector weights_;
};

/// Solves J x = b through the symmetric form (W J) x = W b, falling back to sparse LU
/// when the LDL^T factorization breaks down or loses accuracy.
inline Vector solve_jacobian(const SparseMatrix& J, const Vector& weights, const Vector& b) {
    const double bnorm = std::max(b.lpNorm<Eigen::Infinity>(), 1e-300);
    {
        SparseMatrix WJ = weights.asDiagonal() * J;
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(WJ);
        if (ldlt.info() == Eigen::Success) {
            Vector x = ldlt.solve(weights.cwiseProduct(b));
            if (x.allFinite() && (J * x - b).lpNorm<Eigen::Infinity>() <= 1e-9 * bnorm) return x;
        }
    }
    Eigen::SparseLU<SparseMatrix> lu;
    lu.analyzePattern(J);
    lu.factorize(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SingularJacobian, "Jacobian factorization failed");
    Vector x = lu.solve(b);
    if (!x.allFinite()) throw Error(ErrorKind::SingularJacobian, "Jacobian solve produced non-finite values");
    return x;
}

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 50;
    int max_halvings = 8;
    std::ostream* log = nullptr;
};

struct NewtonResult {
    Vector u;
    int iterations = 0;
    double residual_norm = 0.0;
};

/// Damped Newton on F(., mu, d) = 0 with the sup-norm residual as merit function.
inline NewtonResult newton_solve(const SteadyState& p, Vector u, double mu, double d, const NewtonOptions& opt = {}) {
    Vector F = p.residual(u, mu, d);
    double norm = F.lpNorm<Eigen::Infinity>();
    for (int it = 0;; ++it) {
        if (opt.log) *opt.log << "newton " << it << " residual " << norm << '\n';
        if (norm <= opt.tol) return {std::move(u), it, norm};
        if (it == opt.max_iter) break;
        const Vector step = solve_jacobian(p.jacobian(u, mu, d), p.weights(), F);
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
            Vector trial = u - lambda * step;
            Vector Ft = p.residual(trial, mu, d);
            const double nt = Ft.lpNorm<Eigen::Infinity>();
            if (std::isfinite(nt) && nt < norm) {
                u = std::move(trial);
                F = std::move(Ft);
                norm = nt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    throw Error(ErrorKind::NoConvergence, "Newton did not reach tolerance (residual " + std::to_string(norm) + ")");
}

/// Sparse LU on a general square system.
inline Vector sparse_lu_solve(const SparseMatrix& A, const Vector& rhs, ErrorKind on_fail) {
    Eigen::SparseLU<SparseMatrix> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw Error(on_fail, "sparse LU factorization failed");
    Vector x = lu.solve(rhs);
    if (!x.allFinite()) throw Error(on_fail, "sparse LU produced non-finite values");
    return x;
}

/// Solves [[J, B], [C^T, D]] x = rhs by factorizing the assembled augmented matrix.
inline Vector bordered_solve(const SparseMatrix& J, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                             const Eigen::MatrixXd& D, const Vector& rhs) {
    const Eigen::Index n = J.rows(), k = B.cols();
    if (J.cols() != n || B.rows() != n || C.rows() != n || C.cols() != k || D.rows() != k || D.cols() != k ||
        rhs.size() != n + k)
        throw Error(ErrorKind::Config, "bordered_solve: inconsistent block shapes");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(J.nonZeros() + 2 * n * k + k * k));
    for (Eigen::Index c = 0; c < J.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(J, c); it; ++it)
            t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            if (B(i, j) != 0.0) t.emplace_back(static_cast<int>(i), static_cast<int>(n + j), B(i, j));
            if (C(i, j) != 0.0) t.emplace_back(static_cast<int>(n + j), static_cast<int>(i), C(i, j));
        }
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            if (D(i, j) != 0.0) t.emplace_back(static_cast<int>(n + i), static_cast<int>(n + j), D(i, j));
    SparseMatrix A(n + k, n + k);
    A.setFromTriplets(t.begin(), t.end());
    return sparse_lu_solve(A, rhs, ErrorKind::SingularBorderedSystem);
}

}  // namespace snaklat
