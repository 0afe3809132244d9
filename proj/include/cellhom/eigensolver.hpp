#pragma once

#include <cellhom/errors.hpp>
#include <cellhom/sparse.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cellhom {

/// N smallest generalized eigenpairs K phi = lambda M phi, ascending, with
/// phi_k' M phi_m = delta_km.
struct EigPairs {
  std::vector<double> lambdas;
  Matrix vectors; // one column per mode
  int steps = 0;  // basis vectors generated (Lanczos) or 0 for the dense path
  long inner_iterations = 0;

  int count() const { return static_cast<int>(lambdas.size()); }
};

enum class EigenMethod { automatic, lanczos, dense };

struct EigenOptions {
  double tol = 1e-8;
  std::uint64_t seed = 42;
  EigenMethod method = EigenMethod::automatic;
  int block_size = 4;
  int max_basis = 0; // 0: min(n, 6 N + 60)
  /// Problems up to this size go to the dense solver under `automatic`.
  long dense_threshold = 600;
  /// Hard cap for the dense path.
  long dense_limit = 6000;
  LinearSolverOptions inner;
};

struct EigenCheck {
  double max_orthonormality_defect = 0.0;
  double max_relative_residual = 0.0;
};

namespace detail {

/// Dual norm of r under the lumped (row-sum) mass, sqrt(sum r_i^2 / m_i).
inline double lumped_dual_norm(const Vector& r, const Vector& lumped) {
  return std::sqrt((r.array().square() / lumped.array()).sum());
}

inline void fix_signs(Matrix& vectors) {
  for (long c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

inline EigPairs dense_eigpairs(const SparseSym& k, const SparseSym& m, int count) {
  const Matrix kd = Matrix(k.storage());
  const Matrix md = Matrix(m.storage());
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(kd, md);
  if (es.info() != Eigen::Success) throw SolverFailure("dense generalized eigensolve failed");
  EigPairs out;
  out.lambdas.assign(es.eigenvalues().data(), es.eigenvalues().data() + count);
  out.vectors = es.eigenvectors().leftCols(count);
  fix_signs(out.vectors);
  return out;
}

} // namespace detail

/// Residual and orthonormality audit of an eigen bundle. The residual is
/// ||K phi - lambda M phi|| in the dual of the (lumped) mass norm, relative to
/// lambda ||phi||_M.
inline EigenCheck check_eigpairs(const SparseSym& k, const SparseSym& m, const EigPairs& pairs) {
  EigenCheck out;
  const Matrix mv = m.apply(pairs.vectors);
  const Matrix gram = pairs.vectors.transpose() * mv;
  out.max_orthonormality_defect =
      (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  const Vector lumped = m.row_sums();
  const Matrix kv = k.apply(pairs.vectors);
  for (int c = 0; c < pairs.count(); ++c) {
    const Vector r = kv.col(c) - pairs.lambdas[c] * mv.col(c);
    const double mnorm = std::sqrt(std::max(0.0, pairs.vectors.col(c).dot(mv.col(c))));
    const double rel = detail::lumped_dual_norm(r, lumped) / (std::abs(pairs.lambdas[c]) * mnorm);
    out.max_relative_residual = std::max(out.max_relative_residual, rel);
  }
  return out;
}

/// Smallest eigenpairs of the SPD pencil (K, M) by block shift-invert Lanczos:
/// a Krylov basis of K^{-1} M, kept M-orthonormal by full reorthogonalization,
/// with Rayleigh-Ritz on the projected operator. The largest Ritz values theta
/// of K^{-1} M give lambda = 1 / theta. Small or nearly full problems fall back
/// to a dense generalized eigensolver.
inline EigPairs smallest_eigpairs(const SparseSym& k, const SparseSym& m, int count,
                                  const EigenOptions& options = {}) {
  const long n = k.size();
  if (m.size() != n) throw InvalidInput("smallest_eigpairs: K and M sizes differ");
  if (count < 1) throw InvalidInput("smallest_eigpairs: need N >= 1");
  if (count > n)
    throw InvalidInput("smallest_eigpairs: N = " + std::to_string(count) +
                       " exceeds the dimension " + std::to_string(n));
  if (!(options.tol > 0.0)) throw InvalidInput("smallest_eigpairs: tolerance must be > 0");

  bool dense = options.method == EigenMethod::dense;
  if (options.method == EigenMethod::automatic)
    dense = n <= options.dense_threshold || 3L * count >= n;
  const int block = std::max(1, std::min(options.block_size, count));
  if (!dense && count + 2L * block > n) {
    if (options.method == EigenMethod::lanczos)
      throw InvalidInput("smallest_eigpairs: N too close to the dimension for Lanczos");
    dense = true;
  }
  if (dense) {
    if (n > options.dense_limit)
      throw InvalidInput("smallest_eigpairs: " + std::to_string(count) + " modes of a " +
                         std::to_string(n) + "-dimensional problem need the Lanczos path");
    return detail::dense_eigpairs(k, m, count);
  }

  const long max_basis =
      std::min(n, options.max_basis > 0 ? static_cast<long>(options.max_basis)
                                        : 6L * count + 60L);
  const SpdSolver inverse(k, options.inner);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;

  std::vector<Vector> basis;   // M-orthonormal
  std::vector<Vector> mbasis;  // M * basis[i]
  // coeff[j][i] = basis[i]' M S basis[j], recorded while orthogonalizing S basis[j].
  std::vector<std::vector<double>> coeff;

  // Orthogonalize w against the whole basis (two passes); returns the M-norm
  // left and accumulates projection coefficients.
  auto orthogonalize = [&](Vector& w, std::vector<double>* c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < basis.size(); ++i) {
        const double h = mbasis[i].dot(w);
        w.noalias() -= h * basis[i];
        if (c) (*c)[i] += h;
      }
    }
    return std::sqrt(std::max(0.0, w.dot(m.apply(w))));
  };
  auto append = [&](Vector w, double norm) {
    w /= norm;
    mbasis.push_back(m.apply(w));
    basis.push_back(std::move(w));
  };
  auto random_direction = [&]() {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Vector w(n);
      for (long i = 0; i < n; ++i) w[i] = gauss(rng);
      const double before = std::sqrt(w.dot(m.apply(w)));
      const double after = orthogonalize(w, nullptr);
      if (after > 1e-8 * before) {
        append(std::move(w), after);
        return true;
      }
    }
    return false;
  };

  for (int b = 0; b < block; ++b)
    if (!random_direction()) throw SolverFailure("smallest_eigpairs: cannot build start block");

  std::size_t processed = 0;
  EigPairs out;
  double worst_estimate = 0.0;
  while (true) {
    const std::size_t block_end = std::min(basis.size(), processed + block);
    for (std::size_t j = processed; j < block_end; ++j) {
      Vector w = inverse.solve(mbasis[j]);
      const double start_norm = std::sqrt(std::max(0.0, w.dot(m.apply(w))));
      std::vector<double> c(static_cast<std::size_t>(max_basis + block), 0.0);
      const double rest = orthogonalize(w, &c);
      if (rest > 1e-10 * start_norm && basis.size() < static_cast<std::size_t>(max_basis)) {
        c[basis.size()] = rest;
        append(std::move(w), rest);
      }
      coeff.push_back(std::move(c));
    }
    processed = block_end;
    // Keep the pending block full; refill directions lost to (near) invariance.
    while (basis.size() < processed + block && basis.size() < static_cast<std::size_t>(max_basis))
      if (!random_direction()) break;

    const long p = static_cast<long>(processed);
    const bool exhausted = processed == basis.size();
    if (p < count + block && !exhausted) continue;

    // Rayleigh-Ritz on the processed part. Entry (i, j), i <= j, is the
    // coefficient of v_i recorded while orthogonalizing S v_j.
    Matrix h = Matrix::Zero(p, p);
    for (long j = 0; j < p; ++j)
      for (long i = 0; i <= j; ++i) h(i, j) = h(j, i) = coeff[j][i];
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    // Coupling into the pending (unprocessed) basis vectors.
    const long pending = static_cast<long>(basis.size()) - p;
    Matrix couple = Matrix::Zero(pending, p);
    for (long j = 0; j < p; ++j)
      for (long i = 0; i < pending; ++i) couple(i, j) = coeff[j][p + i];

    bool converged = true;
    worst_estimate = 0.0;
    for (int c = 0; c < count; ++c) {
      const long col = p - 1 - c; // largest theta last
      const double theta = es.eigenvalues()(col);
      const double est =
          pending > 0 ? (couple * es.eigenvectors().col(col)).norm() : 0.0;
      const double rel = est / std::abs(theta);
      worst_estimate = std::max(worst_estimate, rel);
      if (!(theta > 0.0) || rel > 0.1 * options.tol) converged = false;
    }
    if (converged || exhausted || static_cast<long>(basis.size()) >= max_basis) {
      out.lambdas.resize(count);
      out.vectors = Matrix::Zero(n, count);
      for (int c = 0; c < count; ++c) {
        const long col = p - 1 - c;
        out.lambdas[c] = 1.0 / es.eigenvalues()(col);
        for (long i = 0; i < p; ++i) out.vectors.col(c) += es.eigenvectors()(i, col) * basis[i];
        const double norm = std::sqrt(out.vectors.col(c).dot(m.apply(Vector(out.vectors.col(c)))));
        out.vectors.col(c) /= norm;
      }
      out.steps = static_cast<int>(basis.size());
      out.inner_iterations = inverse.iterations();
      const EigenCheck audit = check_eigpairs(k, m, out);
      if (audit.max_relative_residual <= options.tol) break;
      if (exhausted || static_cast<long>(basis.size()) >= max_basis)
        throw SolverFailure("smallest_eigpairs: residual " +
                                std::to_string(audit.max_relative_residual) + " above tolerance " +
                                "with a basis of " + std::to_string(basis.size()),
                            audit.max_relative_residual);
      // Ritz estimates looked converged but the true residual disagrees: keep going.
    }
  }
  detail::fix_signs(out.vectors);
  return out;
}

inline EigenMethod parse_eigen_method(const std::string& s) {
  if (s == "auto") return EigenMethod::automatic;
  if (s == "lanczos") return EigenMethod::lanczos;
  if (s == "dense") return EigenMethod::dense;
  throw ConfigError("unknown eigen method '" + s + "'");
}

} // namespace cellhom
