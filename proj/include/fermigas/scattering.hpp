#pragma once

// Zero-energy s-wave scattering for nonnegative, finite-range radial pair potentials
// (units hbar = 2m = 1, so the relative problem reads -u'' + v u / 2 = 0 with u = r phi).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fermigas/core/constants.hpp"
#include "fermigas/core/error.hpp"
#include "fermigas/core/quadrature.hpp"

namespace fermigas {

/// Value and first two radial derivatives of a radial function.
struct RadialProfile {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Linear piece of a potential on [lo, hi).
struct PotentialSegment {
  double lo = 0.0, hi = 0.0;
  double v_lo = 0.0, v_hi = 0.0;

  double at(double r) const {
    if (hi == lo) return v_lo;
    return v_lo + (v_hi - v_lo) * (r - lo) / (hi - lo);
  }
};

/// Nonnegative radial pair potential with compact support, optionally with a hard core.
/// Represented as a hard-core radius plus piecewise-linear segments (constant segments
/// cover square wells and shells; sampled tables are interpolated linearly).
class RadialPotential {
 public:
  RadialPotential() = default;

  static RadialPotential zero() { return RadialPotential{}; }

  static RadialPotential hard_core(double radius) {
    require(std::isfinite(radius) && radius > 0.0, "hard_core: radius must be positive");
    RadialPotential p;
    p.hard_core_ = radius;
    p.range_ = radius;
    p.kind_ = "hard_core";
    return p;
  }

  static RadialPotential square(double height, double range, double hard_core_radius = 0.0) {
    require(std::isfinite(height) && height >= 0.0, "square: height must be finite and >= 0");
    require(std::isfinite(range) && range > hard_core_radius, "square: range must exceed the hard-core radius");
    require(hard_core_radius >= 0.0, "square: hard-core radius must be >= 0");
    RadialPotential p;
    p.hard_core_ = hard_core_radius;
    p.range_ = range;
    if (height > 0.0) p.segments_.push_back({hard_core_radius, range, height, height});
    p.kind_ = "square";
    return p;
  }

  static RadialPotential shell(double height, double inner, double outer, double hard_core_radius = 0.0) {
    require(std::isfinite(height) && height >= 0.0, "shell: height must be finite and >= 0");
    require(inner >= hard_core_radius && outer > inner, "shell: need hard_core <= inner < outer");
    RadialPotential p;
    p.hard_core_ = hard_core_radius;
    p.range_ = outer;
    if (height > 0.0) p.segments_.push_back({inner, outer, height, height});
    p.kind_ = "shell";
    return p;
  }

  /// Linear interpolation through (r_k, v_k); zero beyond the last sample.
  static RadialPotential sampled(const std::vector<double>& r, const std::vector<double>& v,
                                 double hard_core_radius = 0.0) {
    require(r.size() == v.size() && r.size() >= 2, "sampled: need at least two (r, v) samples of equal length");
    RadialPotential p;
    p.hard_core_ = hard_core_radius;
    for (std::size_t i = 0; i < r.size(); ++i) {
      require(std::isfinite(r[i]) && std::isfinite(v[i]), "sampled: non-finite potential sample");
      require(v[i] >= 0.0, "sampled: potential samples must be >= 0");
      if (i > 0) require(r[i] > r[i - 1], "sampled: radii must be strictly increasing");
    }
    require(r.front() >= hard_core_radius, "sampled: first radius must be >= hard-core radius");
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
      if (v[i] > 0.0 || v[i + 1] > 0.0) p.segments_.push_back({r[i], r[i + 1], v[i], v[i + 1]});
    }
    p.range_ = std::max(r.back(), hard_core_radius);
    p.kind_ = "samples";
    return p;
  }

  /// Same potential with a declared range R0 >= its support.
  RadialPotential with_range(double range) const {
    require(range >= support_end(), "with_range: range must cover the support of v");
    RadialPotential p = *this;
    p.range_ = range;
    return p;
  }

  RadialPotential scaled(double lambda) const {
    require(lambda >= 0.0 && std::isfinite(lambda), "scaled: factor must be finite and >= 0");
    RadialPotential p = *this;
    for (auto& s : p.segments_) {
      s.v_lo *= lambda;
      s.v_hi *= lambda;
    }
    return p;
  }

  /// Replaces the hard core by a finite barrier of the given height on [0, core).
  RadialPotential regularized(double barrier_height) const {
    require(std::isfinite(barrier_height) && barrier_height > 0.0, "regularized: barrier height must be positive");
    if (!has_hard_core()) return *this;
    RadialPotential p = *this;
    p.segments_.insert(p.segments_.begin(), {0.0, hard_core_, barrier_height, barrier_height});
    p.hard_core_ = 0.0;
    return p;
  }

  double hard_core_radius() const { return hard_core_; }
  double range() const { return range_; }
  bool has_hard_core() const { return hard_core_ > 0.0; }
  bool vanishes() const { return !has_hard_core() && segments_.empty(); }
  const std::string& kind() const { return kind_; }
  const std::vector<PotentialSegment>& segments() const { return segments_; }

  double support_end() const {
    double end = hard_core_;
    for (const auto& s : segments_) end = std::max(end, s.hi);
    return end;
  }

  /// v(r); +infinity inside the hard core. Segments are half-open [lo, hi).
  double operator()(double r) const {
    if (r < hard_core_) return std::numeric_limits<double>::infinity();
    for (const auto& s : segments_)
      if (r >= s.lo && r < s.hi) return s.at(r);
    return 0.0;
  }

  /// Value of the linear piece that is active on the open interval (lo, hi).
  double on_interval(double r, double lo, double hi) const {
    const double mid = 0.5 * (lo + hi);
    for (const auto& s : segments_)
      if (mid >= s.lo && mid < s.hi) return s.at(r);
    return 0.0;
  }

  /// Every radius where v or its slope may jump, sorted and unique.
  std::vector<double> breakpoints() const {
    std::vector<double> b{hard_core_, range_};
    for (const auto& s : segments_) {
      b.push_back(s.lo);
      b.push_back(s.hi);
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end(), [](double x, double y) { return std::abs(x - y) < 1e-14 * (1 + std::abs(x)); }),
            b.end());
    return b;
  }

 private:
  double hard_core_ = 0.0;
  double range_ = 0.0;
  std::vector<PotentialSegment> segments_;
  std::string kind_ = "zero";
};

/// Radial profile u(r) = r phi(r) of the zero-energy problem and the extracted scattering length.
struct ScatteringSolution {
  RadialPotential potential;
  std::vector<double> grid;
  std::vector<double> u;
  std::vector<double> du;
  std::vector<double> d2u_right;  ///< u'' using v(r + 0)
  std::vector<double> d2u_left;   ///< u'' using v(r - 0)
  std::vector<std::size_t> knot_index;  ///< grid indices of the breakpoints; uniform in between
  double a_v = 0.0;
  double slope = 1.0;  ///< c in u(r) = c (r - a_v) beyond the range
  double R0 = 0.0;
  double hard_core = 0.0;
  double r_max = 0.0;
  double fit_residual = 0.0;  ///< max relative deviation from the affine fit on the fit window
  std::size_t fit_points = 0;

  /// Normalized phi (phi -> 1 at infinity) with first and second radial derivatives.
  RadialProfile phi(double r) const {
    if (r < hard_core) return {0.0, 0.0, 0.0};
    if (r >= R0 || grid.size() < 2) {
      if (r <= 0.0) return {1.0, 0.0, 0.0};
      return {1.0 - a_v / r, a_v / (r * r), -2.0 * a_v / (r * r * r)};
    }
    auto it = std::upper_bound(grid.begin(), grid.end(), r);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - grid.begin() - 1, 0));
    if (i + 1 >= grid.size()) i = grid.size() - 2;
    const double h = grid[i + 1] - grid[i];
    const double t = (r - grid[i]) / h;
    // Quintic Hermite through (u, u', u'') at both ends.
    const double c0 = u[i], c1 = h * du[i], c2 = 0.5 * h * h * d2u_right[i];
    const double A = u[i + 1] - (c0 + c1 + c2);
    const double B = h * du[i + 1] - (c1 + 2.0 * c2);
    const double C = h * h * d2u_left[i + 1] - 2.0 * c2;
    const double c3 = 10.0 * A - 4.0 * B + 0.5 * C;
    const double c4 = -15.0 * A + 7.0 * B - C;
    const double c5 = 6.0 * A - 3.0 * B + 0.5 * C;
    const double uu = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
    const double up = (c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)))) / h;
    const double upp = (2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5))) / (h * h);
    if (r < 1e-8 * std::max(R0, 1e-300)) {
      // r -> 0 without a core: phi = u'(0)/c + O(r^2).
      const double v0 = potential.on_interval(0.0, 0.0, grid[1]);
      return {du.front() / slope, 0.0, 0.5 * v0 * du.front() / slope / 3.0};
    }
    const double ph = uu / (slope * r);
    const double dph = (up * r - uu) / (slope * r * r);
    const double d2ph = (upp / slope - 2.0 * dph) / r;
    return {ph, dph, d2ph};
  }
};

namespace detail {

inline std::vector<double> piecewise_uniform_grid(const std::vector<double>& knots, double target_h,
                                                  std::vector<std::size_t>* knot_index = nullptr) {
  std::vector<double> grid{knots.front()};
  if (knot_index) knot_index->assign(1, 0);
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double len = knots[k + 1] - knots[k];
    std::size_t steps = static_cast<std::size_t>(std::ceil(len / target_h - 1e-9));
    steps = std::max<std::size_t>(steps, 2);
    if (steps % 2 == 1) ++steps;
    for (std::size_t s = 1; s < steps; ++s)
      grid.push_back(knots[k] + len * static_cast<double>(s) / static_cast<double>(steps));
    grid.push_back(knots[k + 1]);
    if (knot_index) knot_index->push_back(grid.size() - 1);
  }
  return grid;
}

inline double default_r_max(const RadialPotential& v) {
  const double R0 = v.range();
  if (R0 <= 0.0) return 1.0;
  double estimate = v.hard_core_radius();
  if (!v.has_hard_core()) {
    double born = 0.0;
    for (const auto& s : v.segments()) {
      const double h = s.hi - s.lo;
      auto f = [&](double r) { return s.at(r) * r * r; };
      born += 0.5 * h / 6.0 * (f(s.lo) + 4.0 * f(0.5 * (s.lo + s.hi)) + f(s.hi));
    }
    estimate = std::min(R0, born);
  }
  return std::max(4.0 * R0, 8.0 * estimate);
}

}  // namespace detail

/// Integrates -u'' + v u / 2 = 0 outward from the core (u = 0, u' = 1) with classical RK4
/// on a grid that is uniform between consecutive breakpoints of v, then extracts a_v from
/// a least-squares line through u on the outer 20% of (R0, r_max].
inline ScatteringSolution solve_zero_energy(const RadialPotential& v, double r_max = 0.0,
                                            std::size_t n_points = 10000) {
  if (r_max <= 0.0) r_max = detail::default_r_max(v);
  require(std::isfinite(r_max) && r_max > v.range(), "solve_zero_energy: r_max must exceed the range R0");
  require(n_points >= 100, "solve_zero_energy: n_points must be >= 100");
  for (const auto& s : v.segments())
    require(std::isfinite(s.v_lo) && std::isfinite(s.v_hi), "solve_zero_energy: non-finite potential sample");

  ScatteringSolution sol;
  sol.potential = v;
  sol.R0 = v.range();
  sol.hard_core = v.hard_core_radius();
  sol.r_max = r_max;

  std::vector<double> knots;
  for (double b : v.breakpoints())
    if (b > sol.hard_core && b < r_max) knots.push_back(b);
  knots.insert(knots.begin(), sol.hard_core);
  knots.push_back(r_max);
  const double h_target = (r_max - sol.hard_core) / static_cast<double>(n_points - 1);
  sol.grid = detail::piecewise_uniform_grid(knots, h_target, &sol.knot_index);
  const std::size_t n = sol.grid.size();
  require(n >= 3, "solve_zero_energy: degenerate grid");

  sol.u.assign(n, 0.0);
  sol.du.assign(n, 0.0);
  sol.d2u_left.assign(n, 0.0);
  sol.d2u_right.assign(n, 0.0);
  sol.du[0] = 1.0;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double r0 = sol.grid[i], r1 = sol.grid[i + 1], h = r1 - r0;
    auto vh = [&](double r) { return 0.5 * v.on_interval(r, r0, r1); };
    const double u0 = sol.u[i], p0 = sol.du[i];
    const double k1u = p0, k1p = vh(r0) * u0;
    const double k2u = p0 + 0.5 * h * k1p, k2p = vh(r0 + 0.5 * h) * (u0 + 0.5 * h * k1u);
    const double k3u = p0 + 0.5 * h * k2p, k3p = vh(r0 + 0.5 * h) * (u0 + 0.5 * h * k2u);
    const double k4u = p0 + h * k3p, k4p = vh(r1) * (u0 + h * k3u);
    sol.u[i + 1] = u0 + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    sol.du[i + 1] = p0 + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    sol.d2u_right[i] = vh(r0) * u0;
    sol.d2u_left[i + 1] = vh(r1) * sol.u[i + 1];
  }
  sol.d2u_left[0] = sol.d2u_right[0];
  sol.d2u_right[n - 1] = sol.d2u_left[n - 1];

  // Affine fit on the outer 20% of (R0, r_max].
  const double window_start = sol.R0 + 0.8 * (r_max - sol.R0);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.grid[i] < window_start || sol.grid[i] <= sol.R0) continue;
    const double x = sol.grid[i], y = sol.u[i];
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++m;
  }
  require(m >= 3, "solve_zero_energy: affine-tail window holds fewer than 3 grid points");
  const double md = static_cast<double>(m);
  const double slope = (md * sxy - sx * sy) / (md * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / md;
  sol.slope = slope;
  sol.a_v = -intercept / slope;
  sol.fit_points = m;
  double umax = 0.0, dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.grid[i] < window_start || sol.grid[i] <= sol.R0) continue;
    umax = std::max(umax, std::abs(sol.u[i]));
    dev = std::max(dev, std::abs(sol.u[i] - (intercept + slope * sol.grid[i])));
  }
  sol.fit_residual = umax > 0.0 ? dev / umax : 0.0;
  return sol;
}

/// Terms of the identity  int |grad phi|^2 + 1/2 int v phi^2 = 4 pi a_v.
struct EnergyIdentityReport {
  double gradient_term = 0.0;  ///< includes the analytic tail beyond r_max
  double potential_term = 0.0;
  double tail_term = 0.0;
  double target = 0.0;  ///< 4 pi a_v
  double residual = 0.0;
};

/// Evaluates both sides of the integration-by-parts identity by Simpson quadrature on
/// the solution grid (piecewise, so jumps of v sit on panel boundaries).
inline EnergyIdentityReport check_energy_identity(const RadialPotential& v, const ScatteringSolution& sol) {
  require(std::abs(v.range() - sol.R0) <= 1e-12 * (1.0 + sol.R0) &&
              std::abs(v.hard_core_radius() - sol.hard_core) <= 1e-12 * (1.0 + sol.hard_core) &&
              v.segments().size() == sol.potential.segments().size(),
          "check_energy_identity: solution was not produced from this potential");
  EnergyIdentityReport rep;
  const double c = sol.slope;
  for (std::size_t k = 0; k + 1 < sol.knot_index.size(); ++k) {
    const std::size_t start = sol.knot_index[k], end = sol.knot_index[k + 1];
    const double lo = sol.grid[start], hi = sol.grid[end];
    const double h = (hi - lo) / static_cast<double>(end - start);
    std::vector<double> grad, pot;
    for (std::size_t i = start; i <= end; ++i) {
      const double r = sol.grid[i];
      const double num = sol.du[i] * r - sol.u[i];
      grad.push_back(r > 0.0 ? four_pi * num * num / (c * c * r * r) : 0.0);
      const double vv = v.on_interval(r, lo, hi);
      pot.push_back(2.0 * pi * vv * sol.u[i] * sol.u[i] / (c * c));
    }
    rep.gradient_term += quad::simpson(grad, h);
    rep.potential_term += quad::simpson(pot, h);
  }
  rep.tail_term = four_pi * sol.a_v * sol.a_v / sol.r_max;
  rep.gradient_term += rep.tail_term;
  rep.target = four_pi * sol.a_v;
  rep.residual = std::abs(rep.gradient_term + rep.potential_term - rep.target);
  return rep;
}

/// First Born approximation (8 pi)^-1 int v d^3x = 1/2 int v(r) r^2 dr.
inline double born_scattering_length(const RadialPotential& v) {
  require(!v.has_hard_core(), "born_scattering_length: hard core makes int v infinite");
  double total = 0.0;
  for (const auto& s : v.segments()) {
    auto f = [&](double r) { return s.at(r) * r * r; };
    // Simpson is exact for the cubic integrand.
    total += (s.hi - s.lo) / 6.0 * (f(s.lo) + 4.0 * f(0.5 * (s.lo + s.hi)) + f(s.hi));
  }
  return 0.5 * total;
}

/// Opposite-spin pair correlation f = phi / phi(b) for r <= b, 1 beyond.
/// An optional cubic join on [b_join, b] makes f continuously differentiable at b.
class PairFunction {
 public:
  PairFunction() = default;

  double cutoff() const { return b_; }
  double join_start() const { return join_; }
  bool is_smoothed() const { return join_ < b_; }
  double a_v() const { return sol_ ? sol_->a_v : 0.0; }
  double range() const { return sol_ ? sol_->R0 : 0.0; }
  double hard_core() const { return sol_ ? sol_->hard_core : 0.0; }
  const RadialPotential& potential() const { return sol_->potential; }
  /// int |grad f|^2 + 1/2 int v f^2, by quadrature.
  double pair_energy() const { return pair_energy_; }
  bool is_identity() const { return !sol_ || (sol_->a_v == 0.0 && sol_->potential.vanishes()); }

  RadialProfile operator()(double r) const {
    if (is_identity() || r >= b_) return {1.0, 0.0, 0.0};
    if (r < join_) {
      const RadialProfile p = sol_->phi(r);
      return {p.value / phi_b_, p.d1 / phi_b_, p.d2 / phi_b_};
    }
    const double t = (r - join_) / (b_ - join_);
    const double w = b_ - join_;
    return {j0_ + t * (j1_ + t * (j2_ + t * j3_)), (j1_ + t * (2.0 * j2_ + 3.0 * t * j3_)) / w,
            (2.0 * j2_ + 6.0 * t * j3_) / (w * w)};
  }

  /// Copy with a C1 cubic join starting at max(R0, fraction * b).
  PairFunction smoothed(double fraction = 0.8) const {
    require(fraction > 0.0 && fraction < 1.0, "PairFunction::smoothed: fraction must lie in (0, 1)");
    PairFunction out = *this;
    if (is_identity()) return out;
    out.join_ = std::max(range(), fraction * b_);
    if (out.join_ >= b_) return out;
    const RadialProfile start = sol_->phi(out.join_);
    const double y0 = start.value / phi_b_;
    const double m0 = start.d1 / phi_b_ * (b_ - out.join_);
    out.j0_ = y0;
    out.j1_ = m0;
    out.j2_ = 3.0 * (1.0 - y0) - 2.0 * m0;
    out.j3_ = 2.0 * (y0 - 1.0) + m0;
    out.pair_energy_ = out.integrate_energy();
    return out;
  }

  friend PairFunction make_pair_function(const ScatteringSolution& sol, double b);

 private:
  double integrate_energy() const {
    if (is_identity()) return 0.0;
    const ScatteringSolution& s = *sol_;
    double total = 0.0;
    // Inside the range: Simpson on the solution grid, one panel per breakpoint interval.
    for (std::size_t k = 0; k + 1 < s.knot_index.size(); ++k) {
      const std::size_t start = s.knot_index[k], end = s.knot_index[k + 1];
      const double lo = s.grid[start], hi = s.grid[end];
      if (hi > s.R0 + 1e-12 * (1.0 + s.R0)) break;
      const double h = (hi - lo) / static_cast<double>(end - start);
      std::vector<double> y;
      for (std::size_t i = start; i <= end; ++i) {
        const double r = s.grid[i];
        const RadialProfile f = (*this)(r);
        const double vv = s.potential.on_interval(r, lo, hi);
        y.push_back(four_pi * f.d1 * f.d1 * r * r + 2.0 * pi * vv * f.value * f.value * r * r);
      }
      total += quad::simpson(y, h);
    }
    // Outside the range v = 0; Gauss-Legendre on [R0, join] and [join, b].
    static const quad::Rule1D gl = quad::gauss_legendre(20);
    auto grad = [&](double r) {
      const double d = (*this)(r).d1;
      return four_pi * d * d * r * r;
    };
    const double lo = std::max(s.R0, s.hard_core);
    if (join_ > lo) total += quad::integrate(grad, quad::composite(gl, lo, join_, 64));
    if (b_ > join_) total += quad::integrate(grad, quad::composite(gl, std::max(join_, lo), b_, 16));
    return total;
  }

  std::shared_ptr<const ScatteringSolution> sol_;
  double b_ = 0.0;
  double join_ = 0.0;
  double phi_b_ = 1.0;
  double pair_energy_ = 0.0;
  double j0_ = 1.0, j1_ = 0.0, j2_ = 0.0, j3_ = 0.0;
};

inline PairFunction make_pair_function(const ScatteringSolution& sol, double b) {
  require(std::isfinite(b) && b > sol.R0, "make_pair_function: cutoff b must exceed the range R0");
  PairFunction f;
  f.sol_ = std::make_shared<const ScatteringSolution>(sol);
  f.b_ = b;
  f.join_ = b;
  f.phi_b_ = 1.0 - sol.a_v / b;
  f.pair_energy_ = f.integrate_energy();
  return f;
}

/// Same-spin Jastrow factor: 0 below R0, 1 above s, cubic smoothstep in between.
class JastrowFactor {
 public:
  JastrowFactor() = default;
  JastrowFactor(double inner, double outer) : inner_(inner), outer_(outer) {}

  double inner() const { return inner_; }
  double outer() const { return outer_; }
  bool is_identity() const { return inner_ == 0.0 && outer_ == 0.0; }

  RadialProfile operator()(double r) const {
    if (is_identity() || r >= outer_) return {1.0, 0.0, 0.0};
    if (r <= inner_) return {0.0, 0.0, 0.0};
    const double w = outer_ - inner_;
    const double t = (r - inner_) / w;
    return {t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / w, (6.0 - 12.0 * t) / (w * w)};
  }

 private:
  double inner_ = 0.0;
  double outer_ = 0.0;
};

/// With no core (R0 = 0) the factor is the identity; otherwise a smoothstep from R0 to s.
inline JastrowFactor make_jastrow(double R0, double s) {
  require(R0 >= 0.0 && std::isfinite(s) && s > R0, "make_jastrow: need s > R0 >= 0");
  if (R0 == 0.0) return JastrowFactor{};
  return JastrowFactor{R0, s};
}

}  // namespace fermigas
