#pragma once

#include <cellhom/errors.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace cellhom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;

/// Symmetric sparse operator in compressed row storage.
class SparseSym {
public:
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  SparseSym() = default;
  explicit SparseSym(Storage m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InvalidInput("SparseSym: matrix must be square");
    m_.makeCompressed();
  }

  /// Sums duplicate entries and drops those with |value| <= drop_tol * max|value|.
  static SparseSym from_triplets(long n, const std::vector<Triplet>& entries,
                                 double drop_tol = 0.0) {
    Storage m(n, n);
    m.setFromTriplets(entries.begin(), entries.end());
    if (drop_tol > 0.0 && m.nonZeros() > 0) {
      const double cutoff = drop_tol * Eigen::Map<const Vector>(m.valuePtr(), m.nonZeros())
                                           .cwiseAbs()
                                           .maxCoeff();
      m.prune([cutoff](long, long, double v) { return std::abs(v) > cutoff; });
    }
    return SparseSym(std::move(m));
  }

  long size() const noexcept { return m_.rows(); }
  long nonzeros() const noexcept { return m_.nonZeros(); }
  const Storage& storage() const noexcept { return m_; }

  Vector apply(const Vector& x) const { return m_ * x; }
  Matrix apply(const Matrix& x) const { return m_ * x; }

  double entry(long row, long col) const { return m_.coeff(row, col); }

  Vector diagonal() const { return m_.diagonal(); }
  Vector row_sums() const { return m_ * Vector::Ones(size()); }

  /// max |A_uv - A_vu| over stored entries.
  double max_asymmetry() const {
    const Storage t = m_.transpose();
    const Storage d = m_ - t;
    double worst = 0.0;
    for (long k = 0; k < d.outerSize(); ++k)
      for (Storage::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
  }

  /// a * this + b * other (patterns may differ).
  SparseSym combined(double a, const SparseSym& other, double b) const {
    return SparseSym(Storage(a * m_ + b * other.m_));
  }

private:
  Storage m_;
};

enum class Preconditioner { none, jacobi };

struct CgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
  /// Quadratic energy 1/2 x'Ax - b'x after each iteration (only if requested).
  std::vector<double> energy;
};

/// Preconditioned conjugate gradients for A x = b with A symmetric positive
/// definite on the subspace explored (consistent singular systems work too).
inline CgResult cg_solve(const SparseSym& a, const Vector& b, double tol, int maxit,
                         Preconditioner precond = Preconditioner::jacobi,
                         const Vector* initial_guess = nullptr, bool track_energy = false) {
  if (!(tol > 0.0)) throw InvalidInput("cg_solve: tolerance must be > 0");
  if (b.size() != a.size()) throw InvalidInput("cg_solve: right-hand side size mismatch");
  CgResult out;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x = Vector::Zero(b.size());
    return out;
  }
  Vector inv_diag = Vector::Ones(b.size());
  if (precond == Preconditioner::jacobi) {
    const Vector d = a.diagonal();
    for (long i = 0; i < d.size(); ++i) inv_diag[i] = d[i] > 0.0 ? 1.0 / d[i] : 1.0;
  }
  out.x = initial_guess ? *initial_guess : Vector::Zero(b.size());
  Vector r = initial_guess ? Vector(b - a.apply(out.x)) : b;
  Vector z = inv_diag.cwiseProduct(r);
  Vector p = z;
  double rho = r.dot(z);
  double rnorm = r.norm();
  auto energy = [&]() { return -0.5 * out.x.dot(b + r); };
  if (track_energy) out.energy.push_back(energy());
  while (rnorm > tol * bnorm) {
    if (out.iterations >= maxit)
      throw SolverFailure("cg_solve: no convergence after " + std::to_string(maxit) +
                              " iterations (relative residual " + std::to_string(rnorm / bnorm) +
                              ")",
                          rnorm / bnorm);
    const Vector q = a.apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0))
      throw SolverFailure("cg_solve: operator not positive definite along search direction",
                          rnorm / bnorm);
    const double step = rho / pq;
    out.x.noalias() += step * p;
    r.noalias() -= step * q;
    z = inv_diag.cwiseProduct(r);
    const double rho_next = r.dot(z);
    p = z + (rho_next / rho) * p;
    rho = rho_next;
    rnorm = r.norm();
    ++out.iterations;
    if (track_energy) out.energy.push_back(energy());
  }
  out.relative_residual = rnorm / bnorm;
  return out;
}

enum class LinearSolverKind { direct, cg };

inline LinearSolverKind parse_linear_solver(const std::string& s) {
  if (s == "direct") return LinearSolverKind::direct;
  if (s == "cg") return LinearSolverKind::cg;
  throw ConfigError("unknown linear solver '" + s + "'");
}

struct LinearSolverOptions {
  LinearSolverKind kind = LinearSolverKind::direct;
  double cg_tol = 1e-10;
  int cg_maxit = 50000;
  Preconditioner precond = Preconditioner::jacobi;
};

/// Reusable solver for one SPD matrix: sparse LDL^T or PCG behind one interface.
///
/// With `constant_nullspace` the matrix is assumed to be singular with kernel
/// spanned by the constant vector (periodic stiffness). Right-hand sides are
/// projected onto the mean-zero complement; the returned solution is defined
/// up to a constant and callers fix the representative.
class SpdSolver {
public:
  SpdSolver(const SparseSym& a, LinearSolverOptions options, bool constant_nullspace = false)
      : n_(a.size()), options_(options), nullspace_(constant_nullspace) {
    if (options_.kind == LinearSolverKind::cg) {
      a_ = a;
    } else {
      using ColStorage = Eigen::SparseMatrix<double>;
      ColStorage m = a.storage();
      if (nullspace_) {
        // Pin unknown 0; the reduced matrix is SPD.
        const long n = m.rows() - 1;
        m = ColStorage(m.bottomRightCorner(n, n));
      }
      factor_ = std::make_unique<Factor>();
      factor_->compute(m);
      if (factor_->info() != Eigen::Success)
        throw SolverFailure("SpdSolver: sparse factorization failed");
    }
  }

  SpdSolver(SpdSolver&&) noexcept = default;
  SpdSolver& operator=(SpdSolver&&) noexcept = default;

  long size() const noexcept { return n_; }
  long iterations() const noexcept { return iterations_; }
  const LinearSolverOptions& options() const noexcept { return options_; }

  Vector solve(const Vector& b, const Vector* guess = nullptr) const {
    Vector rhs = b;
    if (nullspace_) rhs.array() -= rhs.mean();
    if (options_.kind == LinearSolverKind::direct) {
      if (!nullspace_) return factor_->solve(rhs);
      Vector x = Vector::Zero(rhs.size());
      x.tail(rhs.size() - 1) = factor_->solve(rhs.tail(rhs.size() - 1));
      return x;
    }
    auto res = cg_solve(a_, rhs, options_.cg_tol, options_.cg_maxit, options_.precond, guess);
    iterations_ += res.iterations;
    return std::move(res.x);
  }

  Matrix solve(const Matrix& b) const {
    Matrix x(b.rows(), b.cols());
    if (options_.kind == LinearSolverKind::direct && !nullspace_) {
      x = factor_->solve(b);
      return x;
    }
    for (long c = 0; c < b.cols(); ++c) x.col(c) = solve(Vector(b.col(c)));
    return x;
  }

private:
  using Factor = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                       Eigen::AMDOrdering<int>>;
  long n_;
  SparseSym a_; // kept for the iterative path only
  LinearSolverOptions options_;
  bool nullspace_;
  std::unique_ptr<Factor> factor_;
  mutable long iterations_ = 0;
};

} // namespace cellhom
