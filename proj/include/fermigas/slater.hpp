#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "fermigas/core/error.hpp"
#include "fermigas/core/quadrature.hpp"
#include "fermigas/core/rng.hpp"
#include "fermigas/core/vec3.hpp"
#include "fermigas/scattering.hpp"

namespace fermigas {

using cplx = std::complex<double>;

/// Weighted points in R^3.
struct Quadrature3 {
  std::vector<Vec3> points;
  std::vector<double> weights;
  std::size_t size() const { return points.size(); }
};

/// Tensor Gauss-Legendre rule on the box [lo, hi], `order` nodes per panel, `panels` panels per axis.
inline Quadrature3 box_quadrature(const Vec3& lo, const Vec3& hi, std::size_t order, std::size_t panels = 1) {
  require(order >= 1 && panels >= 1, "box_quadrature: order and panels must be >= 1");
  std::array<quad::Rule1D, 3> axis;
  for (int d = 0; d < 3; ++d) {
    require(hi[d] > lo[d], "box_quadrature: empty box");
    axis[d] = quad::composite(quad::gauss_legendre(order), lo[d], hi[d], panels);
  }
  Quadrature3 q;
  for (std::size_t i = 0; i < axis[0].nodes.size(); ++i)
    for (std::size_t j = 0; j < axis[1].nodes.size(); ++j)
      for (std::size_t k = 0; k < axis[2].nodes.size(); ++k) {
        q.points.push_back({axis[0].nodes[i], axis[1].nodes[j], axis[2].nodes[k]});
        q.weights.push_back(axis[0].weights[i] * axis[1].weights[j] * axis[2].weights[k]);
      }
  return q;
}

using OrbitalEvaluator = std::function<Eigen::VectorXcd(const Vec3&)>;

struct OrbitalSet {
  int n = 0;
  OrbitalEvaluator evaluate;
  Quadrature3 quadrature;
  std::string id;
};

struct OverlapMatrix {
  Eigen::MatrixXcd entries;
  std::string source;
  int n() const { return static_cast<int>(entries.rows()); }
};

/// Linear dependence among orbitals; carries the (unit) offending null direction.
class RankDeficiencyError : public PreconditionError {
 public:
  RankDeficiencyError(const std::string& what, Eigen::VectorXcd direction)
      : PreconditionError(what), direction_(std::move(direction)) {}
  const Eigen::VectorXcd& null_direction() const { return direction_; }

 private:
  Eigen::VectorXcd direction_;
};

namespace detail {
inline void check_positive_definite(const Eigen::MatrixXcd& m, const std::string& who) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues()(0) <= 1e-12 * top)
    throw RankDeficiencyError(who + ": orbitals are linearly dependent (smallest overlap eigenvalue " +
                                  std::to_string(es.eigenvalues()(0)) + ")",
                              es.eigenvectors().col(0));
}
}  // namespace detail

/// M_ab = int conj(phi_a) phi_b by quadrature, symmetrized to be exactly Hermitian.
inline OverlapMatrix overlap_matrix(const OrbitalSet& orbitals) {
  require(orbitals.n >= 1, "overlap_matrix: need at least one orbital");
  require(static_cast<bool>(orbitals.evaluate), "overlap_matrix: missing evaluator");
  require(orbitals.quadrature.size() > 0, "overlap_matrix: empty quadrature");
  const int n = orbitals.n;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  const auto& q = orbitals.quadrature;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Eigen::VectorXcd phi = orbitals.evaluate(q.points[i]);
    require(phi.size() == n, "overlap_matrix: evaluator returned the wrong number of orbitals");
    m.noalias() += q.weights[i] * phi.conjugate() * phi.transpose();
  }
  m = 0.5 * (m + m.adjoint()).eval();
  detail::check_positive_definite(m, "overlap_matrix");
  return {m, orbitals.id};
}

/// <Phi|Phi> = det M, from a Cholesky factor.
inline double slater_norm(const OverlapMatrix& M) {
  require(M.entries.rows() == M.entries.cols() && M.entries.rows() >= 1, "slater_norm: square matrix required");
  Eigen::LLT<Eigen::MatrixXcd> llt(M.entries);
  require(llt.info() == Eigen::Success, "slater_norm: overlap matrix is not positive definite");
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < M.entries.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i).real());
  return std::exp(logdet);
}

/// K(x, y) = sum_ab phi_a(x) (M^{-1})_ab conj(phi_b(y)).
class CorrelationKernel {
 public:
  CorrelationKernel(OrbitalEvaluator evaluate, const OverlapMatrix& M)
      : evaluate_(std::move(evaluate)), llt_(M.entries), n_(M.n()) {
    require(llt_.info() == Eigen::Success, "CorrelationKernel: overlap matrix is not positive definite");
  }
  CorrelationKernel(const OrbitalSet& orbitals, const OverlapMatrix& M) : CorrelationKernel(orbitals.evaluate, M) {}

  int n() const { return n_; }
  cplx operator()(const Vec3& x, const Vec3& y) const {
    const Eigen::VectorXcd px = evaluate_(x), py = evaluate_(y);
    return px.transpose() * llt_.solve(py.conjugate());
  }
  /// [K(x_i, x_j)] for the given points.
  Eigen::MatrixXcd kernel_matrix(const std::vector<Vec3>& pts) const {
    const Eigen::Index m = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXcd phi(n_, m);
    for (Eigen::Index j = 0; j < m; ++j) phi.col(j) = evaluate_(pts[j]);
    const Eigen::MatrixXcd solved = llt_.solve(phi.conjugate());
    return phi.transpose() * solved;
  }

 private:
  OrbitalEvaluator evaluate_;
  Eigen::LLT<Eigen::MatrixXcd> llt_;
  int n_;
};

/// det[K(x_i, x_j)]: the m-particle density, normalized to n! / (n - m)!. Zero for m > n.
inline double m_particle_density(const CorrelationKernel& K, const std::vector<Vec3>& points) {
  require(!points.empty(), "m_particle_density: need at least one point");
  if (static_cast<int>(points.size()) > K.n()) return 0.0;
  const Eigen::MatrixXcd k = K.kernel_matrix(points);
  const Eigen::MatrixXcd h = 0.5 * (k + k.adjoint());
  // Hermitian positive semidefinite: the determinant is real and >= 0 up to rounding
  return std::max(0.0, h.determinant().real());
}

// ---------------------------------------------------------------------------
// Dirichlet box modes

/// The N lowest sine modes of a cube of side L, ordered by n^2 then lexicographically.
inline std::vector<std::array<int, 3>> lowest_box_modes(int N) {
  require(N >= 0, "lowest_box_modes: N must be >= 0");
  const int reach = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(std::max(N, 1))))) + 3;
  std::vector<std::array<int, 3>> all;
  for (int a = 1; a <= reach; ++a)
    for (int b = 1; b <= reach; ++b)
      for (int c = 1; c <= reach; ++c) all.push_back({a, b, c});
  std::stable_sort(all.begin(), all.end(), [](const auto& p, const auto& q) {
    return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
  });
  all.resize(N);
  return all;
}

/// Orthonormal u_n(x) = (2/L)^{3/2} prod sin(n_i pi x_i / L) on [0, L]^3, zero outside.
inline double box_mode(const std::array<int, 3>& n, double L, const Vec3& x) {
  double v = std::pow(2.0 / L, 1.5);
  for (int d = 0; d < 3; ++d) {
    if (x[d] < 0.0 || x[d] > L) return 0.0;
    v *= std::sin(n[d] * std::numbers::pi * x[d] / L);
  }
  return v;
}

inline OrbitalSet box_orbitals(int N, double L, std::size_t order = 12, std::size_t panels = 2) {
  const auto modes = lowest_box_modes(N);
  OrbitalSet s;
  s.n = N;
  s.id = "box_sines(N=" + std::to_string(N) + ")";
  s.evaluate = [modes, L](const Vec3& x) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(modes.size()));
    for (std::size_t a = 0; a < modes.size(); ++a) v(a) = box_mode(modes[a], L, x);
    return v;
  };
  s.quadrature = box_quadrature({0, 0, 0}, {L, L, L}, order, panels);
  return s;
}

/// phi_a(x) = u_a(x) prod_j f(|x - y_j|), evaluated pointwise.
inline OrbitalSet perturbed_box_orbitals(int N, double L, const PairFunction& f, const std::vector<Vec3>& Y,
                                         std::size_t order = 8, std::size_t panels = 2) {
  OrbitalSet s = box_orbitals(N, L, order, panels);
  const auto base = s.evaluate;
  s.id = "perturbed_" + s.id;
  s.evaluate = [base, f, Y](const Vec3& x) {
    double g = 1.0;
    for (const auto& y : Y) g *= f(norm(x - y)).value;
    return Eigen::VectorXcd(base(x) * g);
  };
  return s;
}

// ---------------------------------------------------------------------------
// Key estimate

struct KeyEstimateOptions {
  std::size_t radial_order = 24;   ///< Gauss-Legendre nodes per radial panel
  std::size_t radial_panels = 4;
  std::size_t polar_order = 16;    ///< Gauss-Legendre nodes in cos(theta)
  std::size_t azimuth_points = 32;
};

/// M(Y) for phi_a = u_a prod_j f(x - y_j) with the box modes u_a. Requires the balls of radius
/// f.cutoff() around the centers to be disjoint and inside the box; then
/// prod_j f^2 - 1 = sum_j (f^2(x - y_j) - 1) and M - I is a sum of single-ball integrals.
inline Eigen::MatrixXd key_estimate_overlap(const PairFunction& f, int N, double L, const std::vector<Vec3>& Y,
                                            const KeyEstimateOptions& opt = {}) {
  const double b = f.cutoff();
  for (std::size_t i = 0; i < Y.size(); ++i) {
    for (int d = 0; d < 3; ++d)
      require(Y[i][d] >= b && Y[i][d] <= L - b, "key_estimate_overlap: ball around a center leaves the box");
    for (std::size_t j = i + 1; j < Y.size(); ++j)
      require(norm(Y[i] - Y[j]) >= 2.0 * b, "key_estimate_overlap: balls around centers overlap");
  }
  const auto modes = lowest_box_modes(N);
  const double core = f.hard_core();
  std::vector<double> knots{0.0};
  if (core > 0.0 && core < b) knots.push_back(core);
  if (f.range() > core && f.range() < b) knots.push_back(f.range());
  if (f.join_start() > knots.back() && f.join_start() < b) knots.push_back(f.join_start());
  knots.push_back(b);
  quad::Rule1D radial;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const auto r = quad::composite(quad::gauss_legendre(opt.radial_order), knots[k], knots[k + 1], opt.radial_panels);
    radial.nodes.insert(radial.nodes.end(), r.nodes.begin(), r.nodes.end());
    radial.weights.insert(radial.weights.end(), r.weights.begin(), r.weights.end());
  }
  const auto polar = quad::gauss_legendre(opt.polar_order);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(N, N);
  Eigen::VectorXd u(N);
  for (const auto& y : Y)
    for (std::size_t ir = 0; ir < radial.nodes.size(); ++ir) {
      const double r = radial.nodes[ir];
      const double fv = f(r).value;
      const double deficit = 1.0 - fv * fv;
      if (deficit == 0.0) continue;
      for (std::size_t it = 0; it < polar.nodes.size(); ++it) {
        const double ct = polar.nodes[it], st = std::sqrt(1.0 - ct * ct);
        for (std::size_t ip = 0; ip < opt.azimuth_points; ++ip) {
          const double ph = 2.0 * std::numbers::pi * ip / opt.azimuth_points;
          const Vec3 x = y + r * Vec3{st * std::cos(ph), st * std::sin(ph), ct};
          const double w = radial.weights[ir] * r * r * polar.weights[it] * 2.0 * std::numbers::pi /
                           static_cast<double>(opt.azimuth_points);
          for (int a = 0; a < N; ++a) u(a) = box_mode(modes[a], L, x);
          m.noalias() -= (w * deficit) * u * u.transpose();
        }
      }
    }
  return 0.5 * (m + m.transpose());
}

/// Largest singular value of I - M.
inline double identity_defect(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Identity(m.rows(), m.cols()) - m;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
  return svd.singularValues()(0);
}

/// Rejection sampling of `count` centers with pairwise distance >= s, kept at least `margin`
/// from every face of [0, L]^3.
inline std::vector<Vec3> draw_separated_centers(int count, double L, double s, double margin, Rng& rng,
                                                int max_attempts = 100000) {
  require(count >= 0 && L > 2.0 * margin, "draw_separated_centers: invalid box or margin");
  std::vector<Vec3> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    require(++attempts <= max_attempts, "draw_separated_centers: could not place centers at the requested separation");
    const Vec3 y{rng.uniform(margin, L - margin), rng.uniform(margin, L - margin), rng.uniform(margin, L - margin)};
    bool ok = true;
    for (const auto& z : out) ok = ok && norm(y - z) >= s;
    if (ok) out.push_back(y);
  }
  return out;
}

struct KeyScanConfig {
  int N = 7;           ///< number of box modes
  int centers = 7;     ///< number of centers Y
  double L = 10.0;
  double s = 2.0;      ///< minimal separation of the centers
  std::vector<double> ratios{5.0, 10.0, 20.0, 40.0};  ///< s / a_v values
  int draws = 5;
  std::uint64_t seed = 7;
};

struct KeyScanRow {
  int draw = 0;
  double ratio = 0.0;
  double a_v = 0.0;
  double norm = 0.0;
};

/// ||I - M(Y)|| for hard cores of radius a_v = s / ratio, with f the pair function cut off at
/// b = s / 2 (so the balls around admissible centers never overlap). The same Y are reused
/// across ratios within a draw.
inline std::vector<KeyScanRow> key_estimate_scan(const KeyScanConfig& cfg, const KeyEstimateOptions& opt = {}) {
  require(cfg.N >= 1 && cfg.centers >= 0 && cfg.draws >= 1, "key_estimate_scan: invalid counts");
  require(cfg.s > 0.0 && cfg.L > cfg.s, "key_estimate_scan: need 0 < s < L");
  for (double r : cfg.ratios) require(r > 2.0, "key_estimate_scan: s / a_v must exceed 2 so that a_v < b");
  std::vector<KeyScanRow> rows;
  const double b = 0.5 * cfg.s;
  for (int d = 0; d < cfg.draws; ++d) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(d)));
    const auto Y = draw_separated_centers(cfg.centers, cfg.L, cfg.s, b, rng);
    for (double ratio : cfg.ratios) {
      const double a = cfg.s / ratio;
      const auto sol = solve_zero_energy(RadialPotential::hard_core(a), b);
      const auto f = make_pair_function(sol, b);
      rows.push_back({d, ratio, sol.a_v, identity_defect(key_estimate_overlap(f, cfg.N, cfg.L, Y, opt))});
    }
  }
  return rows;
}

}  // namespace fermigas
