#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

#include "fermigas/core/error.hpp"
#include "fermigas/core/rng.hpp"

namespace fermigas {

/// Applies a symmetric operator column-wise: out = A * in.
using BlockOperator = std::function<void(const Eigen::MatrixXd& in, Eigen::MatrixXd& out)>;

struct EigenSolveOptions {
  int wanted = 1;             ///< number of lowest eigenpairs required to converge
  int guard = 2;              ///< extra block columns carried along
  double tolerance = 1e-8;    ///< residual bound relative to the operator norm estimate
  int max_iterations = 5000;
  std::uint64_t seed = 12345;
  BlockOperator preconditioner;  ///< optional, must be symmetric positive definite
  bool throw_on_failure = true;
};

struct EigenSolveResult {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd residuals;  ///< ||A x - lambda x|| per wanted pair
  double norm_estimate = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Orthonormalizes the columns of `block` against `basis` (assumed orthonormal) and
// among themselves with two passes of classical Gram-Schmidt; drops dependent columns.
inline Eigen::MatrixXd orthonormalize_against(const Eigen::MatrixXd& basis, Eigen::MatrixXd block,
                                              double drop_tol = 1e-10) {
  Eigen::MatrixXd kept(block.rows(), 0);
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    Eigen::VectorXd v = block.col(j);
    const double original = v.norm();
    if (original == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
      if (kept.cols() > 0) v -= kept * (kept.transpose() * v);
    }
    const double n = v.norm();
    if (n <= drop_tol * original) continue;
    kept.conservativeResize(Eigen::NoChange, kept.cols() + 1);
    kept.col(kept.cols() - 1) = v / n;
  }
  return kept;
}

inline double power_norm_estimate(const BlockOperator& apply, Eigen::Index n, Rng& rng, int steps = 30) {
  Eigen::MatrixXd v(n, 1), av(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) v(i, 0) = rng.normal();
  v /= v.norm();
  double estimate = 0.0;
  for (int s = 0; s < steps; ++s) {
    apply(v, av);
    estimate = av.norm();
    if (estimate == 0.0) return 0.0;
    v = av / estimate;
  }
  return estimate;
}

}  // namespace detail

/// Lowest eigenpairs of a symmetric matrix-free operator by the locally optimal block
/// preconditioned conjugate gradient method. The search space [X, W, P] is explicitly
/// orthonormalized each iteration, which trades one extra operator application per
/// column for robustness near convergence.
inline EigenSolveResult lowest_eigenpairs(const BlockOperator& apply, Eigen::Index n,
                                          const EigenSolveOptions& opt = {}) {
  require(opt.wanted >= 1, "lowest_eigenpairs: wanted must be >= 1");
  const Eigen::Index block = std::min<Eigen::Index>(opt.wanted + std::max(opt.guard, 0), n);
  require(block <= n, "lowest_eigenpairs: block larger than problem");
  Rng rng(opt.seed);

  EigenSolveResult result;
  result.norm_estimate = detail::power_norm_estimate(apply, n, rng);

  Eigen::MatrixXd x(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  x = detail::orthonormalize_against(Eigen::MatrixXd(n, 0), x);
  Eigen::MatrixXd ax(n, x.cols());
  apply(x, ax);

  auto rayleigh_ritz = [](const Eigen::MatrixXd& s, const Eigen::MatrixXd& as) {
    Eigen::MatrixXd g = s.transpose() * as;
    g = 0.5 * (g + g.transpose()).eval();
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g);
  };

  {
    auto es = rayleigh_ritz(x, ax);
    x = (x * es.eigenvectors()).eval();
    ax = (ax * es.eigenvectors()).eval();
  }

  Eigen::MatrixXd p(n, 0);
  Eigen::VectorXd lambda(x.cols());
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) lambda(j) = x.col(j).dot(ax.col(j));
    Eigen::MatrixXd r = ax - x * lambda.asDiagonal();
    Eigen::VectorXd rnorm(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) rnorm(j) = r.col(j).norm();
    result.norm_estimate = std::max(result.norm_estimate, lambda.cwiseAbs().maxCoeff());

    const double threshold = opt.tolerance * std::max(result.norm_estimate, 1e-300);
    bool done = true;
    for (int j = 0; j < opt.wanted && j < x.cols(); ++j) done = done && rnorm(j) <= threshold;
    result.iterations = iter;
    if (done) {
      result.converged = true;
      break;
    }

    // Residual directions for columns that have not converged yet.
    Eigen::MatrixXd w(n, 0);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (rnorm(j) <= threshold && j < opt.wanted) continue;
      w.conservativeResize(Eigen::NoChange, w.cols() + 1);
      w.col(w.cols() - 1) = r.col(j);
    }
    if (opt.preconditioner) {
      Eigen::MatrixXd tw(n, w.cols());
      opt.preconditioner(w, tw);
      w = std::move(tw);
    }

    Eigen::MatrixXd wq = detail::orthonormalize_against(x, w);
    Eigen::MatrixXd xw(n, x.cols() + wq.cols());
    xw << x, wq;
    Eigen::MatrixXd pq = detail::orthonormalize_against(xw, p);

    const Eigen::Index nx = x.cols(), nw = wq.cols(), np = pq.cols();
    Eigen::MatrixXd s(n, nx + nw + np);
    s << x, wq, pq;
    Eigen::MatrixXd extra(n, nw + np);
    extra << wq, pq;
    Eigen::MatrixXd a_extra(n, nw + np);
    if (nw + np > 0) apply(extra, a_extra);
    Eigen::MatrixXd as(n, nx + nw + np);
    as << ax, a_extra;

    auto es = rayleigh_ritz(s, as);
    const Eigen::MatrixXd c = es.eigenvectors().leftCols(block);
    Eigen::MatrixXd x_new = s * c;
    Eigen::MatrixXd ax_new = as * c;
    // Implicit direction: the part of the update outside the old X span.
    p = s.rightCols(nw + np) * c.bottomRows(nw + np);
    x = std::move(x_new);
    ax = std::move(ax_new);
    if (iter + 1 == opt.max_iterations) result.iterations = opt.max_iterations;
  }

  for (Eigen::Index j = 0; j < x.cols(); ++j) lambda(j) = x.col(j).dot(ax.col(j));
  Eigen::MatrixXd r = ax - x * lambda.asDiagonal();
  result.values = lambda.head(opt.wanted);
  result.vectors = x.leftCols(opt.wanted);
  result.residuals.resize(opt.wanted);
  for (int j = 0; j < opt.wanted; ++j) result.residuals(j) = r.col(j).norm();
  if (!result.converged && opt.throw_on_failure) {
    throw ConvergenceError("lowest_eigenpairs: no convergence after " +
                               std::to_string(opt.max_iterations) + " iterations",
                           result.residuals.maxCoeff());
  }
  return result;
}

}  // namespace fermigas
