#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <complex>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "fermigas/core/error.hpp"
#include "fermigas/core/lobpcg.hpp"
#include "fermigas/core/quadrature.hpp"
#include "fermigas/core/real_fft.hpp"
#include "fermigas/core/rng.hpp"
#include "fermigas/core/spectral_box.hpp"
#include "fermigas/core/vec3.hpp"
#include "fermigas/scattering.hpp"

namespace fermigas {

// ---------------------------------------------------------------------------
// Soft shell potential

/// U = amplitude on R0 <= |x| <= R, zero elsewhere, with int U = 4 pi.
struct SoftShellPotential {
  double R0 = 0.0;
  double R = 1.0;
  double amplitude = 3.0;

  double operator()(double r) const { return (r >= R0 && r <= R) ? amplitude : 0.0; }
  double integral() const { return 4.0 * std::numbers::pi; }
};

inline SoftShellPotential make_soft_shell(double R0, double R) {
  require(std::isfinite(R0) && std::isfinite(R), "make_soft_shell: radii must be finite");
  require(R0 >= 0.0, "make_soft_shell: R0 must be >= 0");
  require(R > R0, "make_soft_shell: need R > R0");
  return {R0, R, 3.0 / (R * R * R - R0 * R0 * R0)};
}

// ---------------------------------------------------------------------------
// Momentum cutoff and its kernels

/// Radial momentum cutoff chi(p) in [0, 1]. The complement 1 - chi defines the
/// kernel h(x) = (2 pi)^{-3} int (1 - chi(p)) e^{ip.x} d^3p.
class MomentumCutoff {
 public:
  enum class Kind { gaussian, full, none, custom };

  /// 1 - chi(p) = exp(-p^2 / (2 k_c^2)).
  static MomentumCutoff gaussian(double k_c) {
    require(std::isfinite(k_c) && k_c > 0.0, "MomentumCutoff: k_c must be positive");
    MomentumCutoff c;
    c.kind_ = Kind::gaussian;
    c.scale_ = k_c;
    return c;
  }
  /// chi = 1: no low-momentum part, h = 0.
  static MomentumCutoff full() {
    MomentumCutoff c;
    c.kind_ = Kind::full;
    return c;
  }
  /// chi = 0: the complement is not integrable and h does not exist.
  static MomentumCutoff none() {
    MomentumCutoff c;
    c.kind_ = Kind::none;
    return c;
  }
  /// User profile. The complement must vanish for p >= p_max; h is assumed negligible
  /// beyond kernel_extent.
  static MomentumCutoff custom(std::function<double(double)> chi, double p_max, double kernel_extent) {
    require(static_cast<bool>(chi), "MomentumCutoff: empty profile");
    require(p_max > 0.0 && kernel_extent > 0.0, "MomentumCutoff: p_max and kernel_extent must be positive");
    for (int i = 0; i <= 1000; ++i) {
      const double c = chi(p_max * i / 1000.0);
      require(std::isfinite(c) && c >= 0.0 && c <= 1.0, "MomentumCutoff: chi must take values in [0, 1]");
    }
    require(1.0 - chi(p_max) < 1e-14, "MomentumCutoff: complement must vanish at p_max (non-integrable otherwise)");
    MomentumCutoff c;
    c.kind_ = Kind::custom;
    c.chi_ = std::move(chi);
    c.p_max_ = p_max;
    c.extent_ = kernel_extent;
    c.scale_ = p_max;
    return c;
  }

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  bool has_kernel() const { return kind_ != Kind::none; }

  double chi(double p) const {
    switch (kind_) {
      case Kind::gaussian: return 1.0 - std::exp(-p * p / (2.0 * scale_ * scale_));
      case Kind::full: return 1.0;
      case Kind::none: return 0.0;
      case Kind::custom: return p >= p_max_ ? 1.0 : chi_(p);
    }
    return 0.0;
  }
  double complement(double p) const { return 1.0 - chi(p); }

  /// Radius beyond which h is treated as zero.
  double kernel_extent() const {
    switch (kind_) {
      case Kind::gaussian: return 9.0 / scale_;
      case Kind::custom: return extent_;
      default: return 0.0;
    }
  }

  /// h at distance x.
  double kernel(double x) const {
    require(has_kernel(), "MomentumCutoff: complement of chi = 0 is not integrable");
    x = std::abs(x);
    switch (kind_) {
      case Kind::gaussian: {
        const double k = scale_;
        return k * k * k * std::pow(2.0 * std::numbers::pi, -1.5) * std::exp(-0.5 * k * k * x * x);
      }
      case Kind::full: return 0.0;
      case Kind::custom: return numerical_kernel(x);
      default: return 0.0;
    }
  }

  std::string name() const {
    switch (kind_) {
      case Kind::gaussian: return "gaussian";
      case Kind::full: return "full";
      case Kind::none: return "none";
      case Kind::custom: return "custom";
    }
    return "";
  }

 private:
  // h(x) = (2 pi^2 x)^{-1} int_0^{p_max} (1 - chi(p)) p sin(p x) dp.
  double numerical_kernel(double x) const {
    static const quad::Rule1D gl = quad::gauss_legendre(16);
    const int panels = std::max(64, static_cast<int>(std::ceil(4.0 * p_max_ * x / std::numbers::pi)));
    const auto rule = quad::composite(gl, 0.0, p_max_, panels);
    double s = 0.0;
    if (x == 0.0) {
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double p = rule.nodes[i];
        s += rule.weights[i] * complement(p) * p * p;
      }
      return s / (2.0 * std::numbers::pi * std::numbers::pi);
    }
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double p = rule.nodes[i];
      s += rule.weights[i] * complement(p) * p * std::sin(p * x);
    }
    return s / (2.0 * std::numbers::pi * std::numbers::pi * x);
  }

  Kind kind_ = Kind::gaussian;
  double scale_ = 1.0;
  std::function<double(double)> chi_;
  double p_max_ = 0.0;
  double extent_ = 0.0;
};

/// Samples of h on the given radii.
inline std::vector<double> complement_kernel(const MomentumCutoff& chi, const std::vector<double>& radii) {
  require(chi.has_kernel(), "complement_kernel: complement of chi = 0 is not integrable");
  std::vector<double> h(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) h[i] = chi.kernel(radii[i]);
  return h;
}

/// Radial function tabulated on a uniform grid [0, r_max], linear interpolation, zero beyond.
struct RadialTable {
  double dr = 1.0;
  std::vector<double> values;

  double r_max() const { return values.empty() ? 0.0 : dr * static_cast<double>(values.size() - 1); }
  double operator()(double r) const {
    if (values.empty() || r >= r_max()) return 0.0;
    const double s = r / dr;
    const auto i = static_cast<std::size_t>(s);
    const double t = s - static_cast<double>(i);
    return (1.0 - t) * values[i] + t * values[i + 1];
  }
  /// 4 pi int f r^2 dr.
  double volume_integral() const {
    if (values.size() < 3) return 0.0;
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = dr * static_cast<double>(i);
      g[i] = values[i] * r * r;
    }
    return 4.0 * std::numbers::pi * quad::simpson(g, dr);
  }
};

struct CutoffKernels {
  double R = 0.0;
  double safety = 1.05;
  RadialTable f;
  RadialTable w;
  double integral_f = 0.0;  ///< int f_R d^3x
  double integral_w = 0.0;  ///< int w_R d^3x
};

struct KernelOptions {
  int radial_points = 1025;
  int ball_shells = 12;
  int ball_directions = 96;
  int axis_points = 65;
  double safety = 1.05;
};

namespace detail {

/// Deterministic sample of the ball |y| <= R: shells of Fibonacci directions, the
/// z axis at evenly spaced heights, and the origin.
inline std::vector<Vec3> ball_sample(double R, const KernelOptions& opt) {
  std::vector<Vec3> pts{{0.0, 0.0, 0.0}};
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int s = 1; s <= opt.ball_shells; ++s) {
    const double rad = R * s / opt.ball_shells;
    for (int k = 0; k < opt.ball_directions; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / opt.ball_directions;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * k;
      pts.push_back({rad * rho * std::cos(phi), rad * rho * std::sin(phi), rad * z});
    }
  }
  for (int k = 0; k < opt.axis_points; ++k) {
    const double t = opt.axis_points == 1 ? 0.0 : -R + 2.0 * R * k / (opt.axis_points - 1);
    pts.push_back({0.0, 0.0, t});
  }
  return pts;
}

}  // namespace detail

/// f_R(x) = safety * max over a ball sample of |h(x - y) - h(x)| and
/// w_R = (2 / pi^2) f_R int f_R, tabulated radially.
inline CutoffKernels build_fR_wR(const MomentumCutoff& chi, double R, const KernelOptions& opt = {}) {
  require(std::isfinite(R) && R >= 0.0, "build_fR_wR: R must be >= 0");
  require(chi.has_kernel(), "build_fR_wR: complement of chi = 0 is not integrable");
  require(opt.radial_points >= 9 && opt.radial_points % 2 == 1, "build_fR_wR: radial_points must be odd and >= 9");
  CutoffKernels k;
  k.R = R;
  k.safety = opt.safety;
  const double r_max = R + chi.kernel_extent();
  if (R == 0.0 || r_max == R) {
    k.f.dr = k.w.dr = std::max(r_max, 1.0) / (opt.radial_points - 1);
    k.f.values.assign(opt.radial_points, 0.0);
    k.w.values.assign(opt.radial_points, 0.0);
    return k;
  }
  const double dr = r_max / (opt.radial_points - 1);

  // h tabulated finely enough for linear interpolation when it is not analytic.
  const bool analytic = chi.kind() == MomentumCutoff::Kind::gaussian;
  RadialTable h_table;
  if (!analytic) {
    const int n = 8 * opt.radial_points + 1;
    h_table.dr = (r_max + R) / (n - 1);
    h_table.values.resize(n);
    for (int i = 0; i < n; ++i) h_table.values[i] = chi.kernel(h_table.dr * i);
  }
  auto h = [&](double x) { return analytic ? chi.kernel(x) : h_table(x); };

  const auto ball = detail::ball_sample(R, opt);
  k.f.dr = dr;
  k.f.values.resize(opt.radial_points);
  for (int i = 0; i < opt.radial_points; ++i) {
    const double r = dr * i;
    const double hx = h(r);
    double best = r <= R ? std::abs(h(0.0) - hx) : 0.0;  // y = x lies in the ball
    for (const auto& y : ball) {
      const double d = std::sqrt(y.x * y.x + y.y * y.y + (r - y.z) * (r - y.z));
      best = std::max(best, std::abs(h(d) - hx));
    }
    k.f.values[i] = opt.safety * best;
  }
  k.integral_f = k.f.volume_integral();
  k.w.dr = dr;
  k.w.values.resize(opt.radial_points);
  const double c = 2.0 / (std::numbers::pi * std::numbers::pi) * k.integral_f;
  for (int i = 0; i < opt.radial_points; ++i) k.w.values[i] = c * k.f.values[i];
  k.integral_w = c * k.integral_f;
  return k;
}

// ---------------------------------------------------------------------------
// Radial Dyson lemma

struct RadialGapReport {
  std::vector<double> channel_minima;  ///< lowest eigenvalue for l = 0..l_max
  double minimum = 0.0;
  double a_v = 0.0;
  double energy_scale = 0.0;  ///< 1 / h_min^2 of the radial mesh
  double tolerance = 0.0;     ///< absolute threshold used for certification
  std::size_t elements = 0;
  bool certified = false;
};

struct RadialGapOptions {
  std::size_t elements = 2000;
  double tolerance = 1e-8;  ///< in units of energy_scale
};

namespace detail {

/// Symmetric tridiagonal pair (K, B) of a P1 finite-element discretization.
struct Tridiagonal {
  std::vector<double> k_diag, k_off, b_diag, b_off;
  std::size_t size() const { return k_diag.size(); }
};

/// Number of eigenvalues of K x = lambda B x below sigma (Sylvester inertia of K - sigma B).
inline std::size_t count_below(const Tridiagonal& t, double sigma) {
  std::size_t neg = 0;
  double d = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double a = t.k_diag[i] - sigma * t.b_diag[i];
    if (i > 0) {
      const double e = t.k_off[i - 1] - sigma * t.b_off[i - 1];
      a -= e * e / d;
    }
    if (a == 0.0) a = -std::numeric_limits<double>::min();
    if (a < 0.0) ++neg;
    d = a;
  }
  return neg;
}

inline double smallest_generalized_eigenvalue(const Tridiagonal& t) {
  double lo = -1.0, hi = 1.0;
  while (count_below(t, lo) > 0) lo *= 2.0;
  while (count_below(t, hi) == 0) hi *= 2.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (count_below(t, mid) > 0) hi = mid;
    else lo = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

/// Quadratic form  int_{r_c}^R [phi'^2 r^2 + l(l+1) phi^2 + (v/2 - a U) phi^2 r^2] dr
/// against int phi^2 r^2 dr, in the variable phi with 3D measure. Dirichlet at a hard core.
inline Tridiagonal assemble_radial_channel(const RadialPotential& v, const SoftShellPotential& U, double a_v,
                                           const std::vector<double>& nodes, int l, bool dirichlet_start) {
  static const quad::Rule1D gl = quad::gauss_legendre(4);
  const std::size_t n = nodes.size();
  std::vector<double> kd(n, 0.0), ko(n - 1, 0.0), bd(n, 0.0), bo(n - 1, 0.0);
  const double ll = static_cast<double>(l) * (l + 1);
  for (std::size_t e = 0; e + 1 < n; ++e) {
    const double ra = nodes[e], rb = nodes[e + 1], h = rb - ra;
    const double mid = 0.5 * (ra + rb);
    const double u_el = (mid >= U.R0 && mid <= U.R) ? U.amplitude : 0.0;
    double k00 = 0, k01 = 0, k11 = 0, b00 = 0, b01 = 0, b11 = 0;
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      const double r = mid + 0.5 * h * gl.nodes[q];
      const double w = 0.5 * h * gl.weights[q];
      const double na = (rb - r) / h, nb = (r - ra) / h;
      const double r2 = r * r;
      const double pot = 0.5 * v.on_interval(r, ra, rb) - a_v * u_el;
      k00 += w * (r2 / (h * h) + ll * na * na + pot * na * na * r2);
      k11 += w * (r2 / (h * h) + ll * nb * nb + pot * nb * nb * r2);
      k01 += w * (-r2 / (h * h) + ll * na * nb + pot * na * nb * r2);
      b00 += w * na * na * r2;
      b11 += w * nb * nb * r2;
      b01 += w * na * nb * r2;
    }
    kd[e] += k00;
    kd[e + 1] += k11;
    ko[e] += k01;
    bd[e] += b00;
    bd[e + 1] += b11;
    bo[e] += b01;
  }
  Tridiagonal t;
  const std::size_t s = dirichlet_start ? 1 : 0;
  t.k_diag.assign(kd.begin() + s, kd.end());
  t.b_diag.assign(bd.begin() + s, bd.end());
  t.k_off.assign(ko.begin() + s, ko.end());
  t.b_off.assign(bo.begin() + s, bo.end());
  return t;
}

inline std::vector<double> radial_gap_mesh(const RadialPotential& v, const SoftShellPotential& U, double R,
                                           std::size_t elements) {
  const double start = v.hard_core_radius();
  std::vector<double> knots{start, R, U.R0, U.R};
  for (double b : v.breakpoints())
    if (b > start && b < R) knots.push_back(b);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::remove_if(knots.begin(), knots.end(), [&](double x) { return x < start || x > R; }), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end(),
                          [](double x, double y) { return std::abs(x - y) < 1e-13 * (1 + std::abs(x)); }),
              knots.end());
  return piecewise_uniform_grid(knots, (R - start) / static_cast<double>(elements));
}

}  // namespace detail

/// Lowest eigenvalue, per angular momentum channel, of the Dyson-lemma form
/// int_{|x|<R} |grad psi|^2 + (1/2) int v |psi|^2 - a_v int U |psi|^2 on the ball of radius R.
inline RadialGapReport dyson_gap_radial(const RadialPotential& v, const SoftShellPotential& U, double R, int l_max,
                                        const RadialGapOptions& opt = {}) {
  require(l_max >= 0, "dyson_gap_radial: l_max must be >= 0");
  require(R >= U.R, "dyson_gap_radial: U must be supported inside the ball of radius R");
  require(U.R0 >= v.support_end() - 1e-14, "dyson_gap_radial: U must vanish where v is supported (U.R0 >= range of v)");
  require(opt.elements >= 16, "dyson_gap_radial: too few elements");

  RadialGapReport rep;
  rep.a_v = v.vanishes() ? 0.0 : solve_zero_energy(v).a_v;
  const auto nodes = detail::radial_gap_mesh(v, U, R, opt.elements);
  double h_min = INFINITY, h_max = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    h_min = std::min(h_min, nodes[i + 1] - nodes[i]);
    h_max = std::max(h_max, nodes[i + 1] - nodes[i]);
  }
  if (!v.vanishes()) {
    const double feature = v.support_end() - v.hard_core_radius();
    require(h_max <= std::max(feature, v.hard_core_radius()) / 8.0,
            "dyson_gap_radial: mesh too coarse to resolve the potential range (h = " + std::to_string(h_max) + ")");
  }
  rep.elements = nodes.size() - 1;
  rep.energy_scale = 1.0 / (h_min * h_min);
  rep.tolerance = opt.tolerance * rep.energy_scale;
  rep.minimum = INFINITY;
  for (int l = 0; l <= l_max; ++l) {
    const auto t = detail::assemble_radial_channel(v, U, rep.a_v, nodes, l, v.has_hard_core());
    rep.channel_minima.push_back(detail::smallest_generalized_eigenvalue(t));
    rep.minimum = std::min(rep.minimum, rep.channel_minima.back());
  }
  rep.certified = rep.minimum >= -rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Grid operators

namespace detail {

/// Adds c * f(|x - center|) to `field`. With a target integral the imprint is rescaled
/// so that its grid sum reproduces it; an imprint that misses every grid point is
/// deposited on the nearest one.
inline void imprint(const BoxGrid& grid, const Vec3& center, double support, const std::function<double(double)>& f,
                    double c, std::vector<double>& field, double target_integral = -1.0) {
  const double dv = grid.cell_volume();
  std::vector<std::pair<std::size_t, double>> touched;
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = norm(grid.displacement(grid.point(i), center));
    if (r > support) continue;
    const double val = f(r);
    if (val == 0.0) continue;
    touched.emplace_back(i, val);
    sum += val * dv;
  }
  double scale = 1.0;
  if (target_integral >= 0.0 && sum > 0.0) scale = target_integral / sum;
  if (target_integral > 0.0 && touched.empty()) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = norm(grid.displacement(grid.point(i), center));
      if (d < best_d) best_d = d, best = i;
    }
    field[best] += c * target_integral / dv;
    return;
  }
  for (const auto& [i, val] : touched) field[i] += c * scale * val;
}

inline double wavenumber_norm(const BoxGrid& g, int i, int j, int k) {
  const double a = g.wavenumber(i), b = g.wavenumber(j), c = g.wavenumber(k);
  return std::sqrt(a * a + b * b + c * c);
}

}  // namespace detail

/// Warnings for grid spacings that do not resolve a length with at least 4 points.
inline std::vector<std::string> resolution_warnings(const BoxGrid& grid, double R0, double k_c) {
  std::vector<std::string> w;
  const double h = grid.spacing();
  if (R0 > 0.0 && h > R0 / 4.0)
    w.push_back("grid spacing " + std::to_string(h) + " does not resolve R0 = " + std::to_string(R0));
  if (k_c > 0.0 && h > 1.0 / (4.0 * k_c))
    w.push_back("grid spacing " + std::to_string(h) + " does not resolve 1/k_c = " + std::to_string(1.0 / k_c));
  return w;
}

struct GeneralizedGapOptions {
  double tolerance = 1e-6;      ///< certification threshold in units of (2 pi M / L)^2
  double barrier_factor = 1e4;  ///< hard cores become barriers of height barrier_factor / R0^2
  double eigen_tolerance = 1e-8;
  int max_iterations = 300;  ///< Lanczos steps per parity sector
  std::uint64_t seed = 2024;
  KernelOptions kernel;
};

struct GeneralizedGapReport {
  double minimum = 0.0;    ///< lowest eigenvalue over all parity sectors
  double residual = 0.0;   ///< ||A x - minimum x|| for the corresponding unit eigenvector
  double tolerance = 0.0;  ///< tol = tolerance * (2 pi M / L)^2
  double a_v = 0.0;        ///< scattering length of the potential actually used
  double barrier_height = 0.0;  ///< 0 unless a hard core was regularized
  double integral_w = 0.0;
  std::vector<double> sector_minima;  ///< indexed by parity bits (x, y, z) = (1, 2, 4), set = odd
  std::size_t dimension = 0;
  bool converged = false;
  bool certified = false;  ///< A + tol passed a Cholesky factorization in every sector
  std::vector<std::string> warnings;
};

namespace detail {

inline double sinc(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 + x * x * x * x / 120.0 : std::sin(x) / x; }

/// 4 pi int_0^R r^2 j0(k r) dr, the transform of the ball indicator.
inline double ball_transform(double R, double k) {
  const double x = k * R;
  if (x < 1e-2) return 4.0 * std::numbers::pi * R * R * R / 3.0 * (1.0 - x * x / 10.0 + x * x * x * x / 280.0);
  return 4.0 * std::numbers::pi * (std::sin(x) - x * std::cos(x)) / (k * k * k);
}

/// 4 pi int f(r) r^2 j0(k r) dr over consecutive knot intervals; f must be smooth inside each.
inline double radial_transform(const std::function<double(double)>& f, const std::vector<double>& knots, double k) {
  static const quad::Rule1D gl = quad::gauss_legendre(8);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    if (b <= a) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil(k * (b - a) / 2.0)));
    const double w = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double lo = a + p * w, mid = lo + 0.5 * w;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double r = mid + 0.5 * w * gl.nodes[q];
        s += 0.5 * w * gl.weights[q] * f(r) * r * r * sinc(k * r);
      }
    }
  }
  return 4.0 * std::numbers::pi * s;
}

struct LanczosTop {
  double value = 0.0;
  Eigen::VectorXd vector;
  double residual = 0.0;
  bool converged = false;
};

/// Largest eigenvalue of the SPD operator `op` by Lanczos with full reorthogonalization.
inline LanczosTop lanczos_top(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op, Eigen::Index n,
                              int max_steps, double tol, std::uint64_t seed) {
  max_steps = static_cast<int>(std::min<Eigen::Index>(max_steps, n));
  Eigen::MatrixXd Q(n, max_steps);
  std::vector<double> alpha, beta;
  Rng rng(seed);
  Eigen::VectorXd q = Eigen::VectorXd::NullaryExpr(n, [&]() { return rng.normal(); });
  q.normalize();
  LanczosTop out;
  for (int k = 0; k < max_steps; ++k) {
    Q.col(k) = q;
    Eigen::VectorXd w = op(q);
    alpha.push_back(q.dot(w));
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
    const double b = w.norm();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k + 1, k + 1);
    for (int i = 0; i <= k; ++i) {
      T(i, i) = alpha[i];
      if (i < k) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const double theta = es.eigenvalues()(k);
    const double est = b * std::abs(es.eigenvectors()(k, k));
    if (est <= tol * std::abs(theta) || b <= 1e-14 * std::abs(theta) || k + 1 == max_steps) {
      out.value = theta;
      out.vector = Q.leftCols(k + 1) * es.eigenvectors().col(k);
      out.residual = est;
      out.converged = est <= tol * std::abs(theta) || b <= 1e-14 * std::abs(theta);
      return out;
    }
    beta.push_back(b);
    q = w / b;
  }
  return out;
}

}  // namespace detail

/// Generalized Dyson operator A = sum_k D_k^* theta_R D_k + v/2 - (1 - eps) a U + (a / eps) w_R,
/// D_k = F^{-1}(i p_k chi(p)) F, on the space of band-limited periodic functions sampled on a
/// BoxGrid (Nyquist modes excluded). theta_R, v, U and w_R enter through their exact Fourier
/// coefficients, so the matrix is the exact compression of the continuum quadratic form to that
/// space. apply() forms the products on a twice finer grid, where they are alias-free;
/// sector_matrix() assembles the same matrix densely in a cosine/sine basis.
class GeneralizedDysonOperator {
 public:
  GeneralizedDysonOperator(const RadialPotential& v, const SoftShellPotential& U, const MomentumCutoff& chi, double eps,
                           double R, const BoxGrid& grid, const GeneralizedGapOptions& opt = {})
      : grid_(grid), coarse_(grid.M), fine_(2 * grid.M) {
    validate(grid);
    require(grid.M % 2 == 0, "generalized_dyson_gap: M must be even");
    require(eps > 0.0 && eps < 1.0, "generalized_dyson_gap: eps must lie in (0, 1)");
    require(grid.boundary == Boundary::periodic, "generalized_dyson_gap: a periodic grid is required");
    require(R >= U.R, "generalized_dyson_gap: U must be supported inside the ball of radius R");
    require(grid.L > 2.0 * R, "generalized_dyson_gap: box too small for the ball of radius R");
    v_grid_ = v;
    if (v.has_hard_core()) {
      barrier_height_ = opt.barrier_factor / (v.hard_core_radius() * v.hard_core_radius());
      v_grid_ = v.regularized(barrier_height_);
    }
    require(U.R0 >= v_grid_.support_end() - 1e-14, "generalized_dyson_gap: U must vanish where v is supported");
    a_v_ = v_grid_.vanishes() ? 0.0 : solve_zero_energy(v_grid_).a_v;
    warnings_ = resolution_warnings(grid, v.range(), chi.kind() == MomentumCutoff::Kind::gaussian ? chi.scale() : 0.0);

    CutoffKernels kernels;
    if (chi.has_kernel()) {
      kernels = build_fR_wR(chi, R, opt.kernel);
      integral_w_ = kernels.integral_w;
    } else {
      warnings_.push_back("chi = 0: the w_R term is undefined and omitted");
    }

    unit_ = 2.0 * std::numbers::pi / grid.L;
    const int m = grid.M;
    chi_.assign(3 * (m / 2) * (m / 2) + 1, 0.0);
    for (std::size_t n2 = 0; n2 < chi_.size(); ++n2) chi_[n2] = chi.chi(unit_ * std::sqrt(static_cast<double>(n2)));
    build_mode_maps();

    // Fourier coefficients (divided by L^3) of the fields, by integer |n|^2 for |n_i| < M.
    std::vector<double> v_knots = v_grid_.breakpoints();
    v_knots.insert(v_knots.begin(), 0.0);
    std::vector<double> w_knots;
    if (integral_w_ > 0.0)
      for (std::size_t i = 0; i < kernels.w.values.size(); ++i) w_knots.push_back(kernels.w.dr * i);
    auto pot_ft = [&](double k) {
      double s = 0.0;
      if (!v_grid_.vanishes()) s += 0.5 * detail::radial_transform([&](double r) { return v_grid_(r); }, v_knots, k);
      s -= (1.0 - eps) * a_v_ * U.amplitude * (detail::ball_transform(U.R, k) - detail::ball_transform(U.R0, k));
      if (integral_w_ > 0.0)
        s += (a_v_ / eps) * detail::radial_transform([&](double r) { return kernels.w(r); }, w_knots, k);
      return s;
    };
    const double volume = grid.L * grid.L * grid.L;
    const std::size_t n2_max = 3 * static_cast<std::size_t>(m - 1) * (m - 1);
    theta_hat_.assign(n2_max + 1, 0.0);
    pot_hat_.assign(n2_max + 1, 0.0);
    std::vector<char> seen(n2_max + 1, 0);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b)
        for (int c = b; c < m; ++c) {
          const std::size_t n2 = a * a + b * b + c * c;
          if (seen[n2]) continue;
          seen[n2] = 1;
          const double k = unit_ * std::sqrt(static_cast<double>(n2));
          theta_hat_[n2] = detail::ball_transform(R, k) / volume;
          pot_hat_[n2] = pot_ft(k) / volume;
        }
    theta_ = band_limited_field(theta_hat_);
    potential_ = band_limited_field(pot_hat_);
  }

  std::size_t size() const { return grid_.size(); }
  double a_v() const { return a_v_; }
  double barrier_height() const { return barrier_height_; }
  double integral_w() const { return integral_w_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const BoxGrid& grid() const { return grid_; }

  /// Applies A to grid values of a band-limited function (Nyquist content is discarded).
  void apply(const double* in, double* out) const {
    using cd = std::complex<double>;
    const double mc = static_cast<double>(coarse_.real_size());
    const double mf = static_cast<double>(fine_.real_size());
    std::vector<cd> c(coarse_.spectrum_size()), acc(coarse_.spectrum_size(), 0.0);
    coarse_.forward(in, c.data());
    for (auto& z : c) z /= mc;
    std::vector<cd> f(fine_.spectrum_size());
    std::vector<double> g(fine_.real_size());
    const cd I(0.0, 1.0);
    for (int a = 0; a < 4; ++a) {
      std::fill(f.begin(), f.end(), cd(0.0));
      for (std::size_t m = 0; m < modes_.size(); ++m) {
        const auto& md = modes_[m];
        f[md.fine] = a < 3 ? I * md.d[a] * c[md.coarse] : c[md.coarse];
      }
      fine_.backward(f.data(), g.data());
      const auto& field = a < 3 ? theta_ : potential_;
      for (std::size_t q = 0; q < g.size(); ++q) g[q] *= field[q];
      fine_.forward(g.data(), f.data());
      for (std::size_t m = 0; m < modes_.size(); ++m) {
        const auto& md = modes_[m];
        acc[md.coarse] += (a < 3 ? -I * md.d[a] : cd(1.0)) * f[md.fine] / mf;
      }
    }
    coarse_.backward(acc.data(), out);
  }

  BlockOperator block() const {
    return [this](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
      out.resize(in.rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c) apply(in.col(c).data(), out.col(c).data());
    };
  }

  /// Mode triples (n_x, n_y, n_z), all >= 0, of a parity sector. Bit j of `sector` set means odd
  /// along axis j (sine, n_j >= 1); clear means even (cosine, n_j >= 0). |n_j| < M / 2.
  std::vector<std::array<int, 3>> sector_modes(int sector) const {
    require(sector >= 0 && sector < 8, "sector_modes: sector must lie in 0..7");
    const int top = grid_.M / 2 - 1;
    std::vector<std::array<int, 3>> out;
    const int lo[3] = {sector & 1 ? 1 : 0, sector & 2 ? 1 : 0, sector & 4 ? 1 : 0};
    for (int a = lo[0]; a <= top; ++a)
      for (int b = lo[1]; b <= top; ++b)
        for (int c = lo[2]; c <= top; ++c) out.push_back({a, b, c});
    return out;
  }

  /// Matrix of A in the orthonormal basis prod_j sqrt(2) cos|sin(n_j u x'_j) (a bare 1 for n_j = 0),
  /// x' = x - L/2, u = 2 pi / L, inner product (1 / L^3) int. A commutes with the reflections
  /// x'_j -> -x'_j, so these 8 sectors block-diagonalize it.
  Eigen::MatrixXd sector_matrix(int sector) const {
    const auto modes = sector_modes(sector);
    const Eigen::Index n = static_cast<Eigen::Index>(modes.size());
    Eigen::MatrixXd out(n, n);
    const double u2 = unit_ * unit_;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& k = modes[i];
      const int nz_k = (k[0] != 0) + (k[1] != 0) + (k[2] != 0);
      const double chi_k = chi_[k[0] * k[0] + k[1] * k[1] + k[2] * k[2]];
      for (Eigen::Index j = i; j < n; ++j) {
        const auto& q = modes[j];
        const int nz_q = (q[0] != 0) + (q[1] != 0) + (q[2] != 0);
        const double chi_q = chi_[q[0] * q[0] + q[1] * q[1] + q[2] * q[2]];
        double s = 0.0;
        for (int flips = 0; flips < 8; ++flips) {
          int t[3];
          double sign = 1.0;
          bool duplicate = false;
          for (int d = 0; d < 3; ++d) {
            const bool flip = flips >> d & 1;
            if (flip && q[d] == 0) duplicate = true;
            t[d] = flip ? -q[d] : q[d];
            if (flip && (sector >> d & 1)) sign = -sign;
          }
          if (duplicate) continue;
          const int dx = k[0] - t[0], dy = k[1] - t[1], dz = k[2] - t[2];
          const std::size_t n2 = dx * dx + dy * dy + dz * dz;
          const double dot = k[0] * t[0] + k[1] * t[1] + k[2] * t[2];
          s += sign * (chi_k * chi_q * u2 * dot * theta_hat_[n2] + pot_hat_[n2]);
        }
        out(i, j) = out(j, i) = s * std::pow(2.0, 0.5 * (nz_k - nz_q));
      }
    }
    return out;
  }

 private:
  struct Mode {
    std::size_t coarse, fine;
    double d[3];  ///< p_k chi(|p|)
  };

  void build_mode_maps() {
    const int m = grid_.M, mf = 2 * grid_.M, hc = coarse_.half(), hf = fine_.half();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < hc; ++l) {
          const int a = coarse_.frequency(i), b = coarse_.frequency(j), c = l;
          if (std::abs(a) == m / 2 || std::abs(b) == m / 2 || c == m / 2) continue;
          Mode md;
          md.coarse = (static_cast<std::size_t>(i) * m + j) * hc + l;
          const int fi = (a + mf) % mf, fj = (b + mf) % mf;
          md.fine = (static_cast<std::size_t>(fi) * mf + fj) * hf + c;
          const double ch = chi_[a * a + b * b + c * c];
          md.d[0] = unit_ * a * ch;
          md.d[1] = unit_ * b * ch;
          md.d[2] = unit_ * c * ch;
          modes_.push_back(md);
        }
  }

  /// Fine-grid values of sum_n coefficient(|n|^2) e^{i k_n . (x - c)} over |n_i| < M, c the box center.
  std::vector<double> band_limited_field(const std::vector<double>& coefficient) const {
    using cd = std::complex<double>;
    const int m = grid_.M, mf = 2 * m, hf = fine_.half();
    std::vector<cd> f(fine_.spectrum_size(), 0.0);
    for (int i = 0; i < mf; ++i)
      for (int j = 0; j < mf; ++j)
        for (int l = 0; l < hf; ++l) {
          const int a = fine_.frequency(i), b = fine_.frequency(j), c = l;
          if (std::abs(a) >= m || std::abs(b) >= m || c >= m) continue;
          // Center at L/2 in every direction: e^{-i k . c} = (-1)^{a + b + c}.
          const double sign = ((a + b + c) % 2 == 0) ? 1.0 : -1.0;
          f[(static_cast<std::size_t>(i) * mf + j) * hf + l] = sign * coefficient[a * a + b * b + c * c];
        }
    std::vector<double> out(fine_.real_size());
    fine_.backward(f.data(), out.data());
    return out;
  }

  BoxGrid grid_;
  RealFFT3 coarse_, fine_;
  RadialPotential v_grid_;
  double barrier_height_ = 0.0;
  double a_v_ = 0.0;
  double integral_w_ = 0.0;
  double unit_ = 0.0;
  std::vector<double> chi_;  ///< chi(|p|) by integer |n|^2
  std::vector<double> theta_hat_, pot_hat_;
  std::vector<Mode> modes_;
  std::vector<double> theta_, potential_;
  std::vector<std::string> warnings_;
};

/// Certifies A >= -tol, tol = tolerance * (2 pi M / L)^2, by a Cholesky factorization of
/// A + tol in each parity sector. The lowest eigenvalue of a certified sector comes from
/// Lanczos on (A + tol)^{-1}; an uncertified sector is diagonalized outright.
inline GeneralizedGapReport generalized_dyson_gap(const RadialPotential& v, const SoftShellPotential& U,
                                                  const MomentumCutoff& chi, double eps, double R, const BoxGrid& grid,
                                                  const GeneralizedGapOptions& opt = {}) {
  GeneralizedDysonOperator op(v, U, chi, eps, R, grid, opt);
  GeneralizedGapReport rep;
  rep.a_v = op.a_v();
  rep.barrier_height = op.barrier_height();
  rep.integral_w = op.integral_w();
  rep.warnings = op.warnings();
  rep.tolerance = opt.tolerance * std::pow(2.0 * std::numbers::pi * grid.M / grid.L, 2);
  rep.certified = true;
  rep.converged = true;
  rep.minimum = std::numeric_limits<double>::infinity();
  for (int sector = 0; sector < 8; ++sector) {
    const Eigen::MatrixXd a = op.sector_matrix(sector);
    rep.dimension += static_cast<std::size_t>(a.rows());
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += rep.tolerance;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    double lowest = 0.0, residual = 0.0;
    if (llt.info() == Eigen::Success) {
      const auto top = detail::lanczos_top([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(llt.solve(x)); },
                                           a.rows(), opt.max_iterations, opt.eigen_tolerance,
                                           opt.seed + static_cast<std::uint64_t>(sector));
      lowest = 1.0 / top.value - rep.tolerance;
      const Eigen::VectorXd x = top.vector.normalized();
      residual = (a * x - lowest * x).norm();
      rep.converged = rep.converged && top.converged;
    } else {
      rep.certified = false;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
      lowest = es.eigenvalues()(0);
      const Eigen::VectorXd x = es.eigenvectors().col(0);
      residual = (a * x - lowest * x).norm();
    }
    rep.sector_minima.push_back(lowest);
    if (lowest < rep.minimum) {
      rep.minimum = lowest;
      rep.residual = residual;
    }
  }
  return rep;
}


// ---------------------------------------------------------------------------
// Multi-center one-body operator

/// -div (1 - chi(p)) grad + sum' [(1 - eps) a U(x - y_j) - (a / eps) w_R(x - y_j)], where the
/// sum runs over centers whose nearest neighbor is at least 2R away.
class MultiCenterOperator {
 public:
  MultiCenterOperator(const RadialPotential& v, const SoftShellPotential& U, const MomentumCutoff& chi, double eps,
                      double R, const std::vector<Vec3>& centers, const BoxGrid& grid, const KernelOptions& kopt = {})
      : grid_(grid), transform_(grid), centers_(centers) {
    require(eps > 0.0 && eps < 1.0, "multi_center_operator: eps must lie in (0, 1)");
    require(R >= U.R, "multi_center_operator: U must be supported inside the ball of radius R");
    for (const auto& y : centers)
      for (int c = 0; c < 3; ++c)
        require(y[c] >= 0.0 && y[c] <= grid.L, "multi_center_operator: centers must lie in the box");
    a_v_ = v.vanishes() ? 0.0 : solve_zero_energy(v).a_v;

    for (std::size_t i = 0; i < centers.size(); ++i) {
      bool isolated = true;
      for (std::size_t j = 0; j < centers.size() && isolated; ++j)
        if (i != j && norm(grid.displacement(centers[i], centers[j])) < 2.0 * R) isolated = false;
      if (isolated) active_.push_back(i);
    }

    potential_.assign(grid.size(), 0.0);
    if (!active_.empty() && a_v_ > 0.0) {
      CutoffKernels k;
      if (chi.has_kernel()) k = build_fR_wR(chi, R, kopt);
      else w_omitted_ = true;
      for (std::size_t i : active_) {
        detail::imprint(grid, centers[i], U.R, [&](double r) { return U(r); }, (1.0 - eps) * a_v_, potential_,
                        U.integral());
        if (chi.has_kernel() && k.integral_w > 0.0)
          detail::imprint(grid, centers[i], k.w.r_max(), [&](double r) { return k.w(r); }, -a_v_ / eps, potential_,
                          k.integral_w);
      }
    }

    const int m = grid.M;
    kinetic_.resize(grid.size());
    std::size_t idx = 0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k, ++idx) {
          const double p = detail::wavenumber_norm(grid, i, j, k);
          kinetic_[idx] = p * p * chi.complement(p);
        }
  }

  std::size_t size() const { return grid_.size(); }
  const BoxGrid& grid() const { return grid_; }
  std::size_t excluded_count() const { return centers_.size() - active_.size(); }
  const std::vector<std::size_t>& active_centers() const { return active_; }
  bool w_omitted() const { return w_omitted_; }
  double a_v() const { return a_v_; }
  const std::vector<double>& potential() const { return potential_; }
  const std::vector<double>& kinetic_symbol() const { return kinetic_; }

  void apply(const double* in, double* out) const {
    const std::size_t n = grid_.size();
    if (grid_.boundary == Boundary::periodic) {
      std::vector<std::complex<double>> f(in, in + n);
      transform_.forward(f);
      for (std::size_t q = 0; q < n; ++q) f[q] *= kinetic_[q];
      transform_.backward(f);
      for (std::size_t q = 0; q < n; ++q) out[q] = f[q].real() + potential_[q] * in[q];
    } else {
      std::vector<double> f(in, in + n);
      transform_.sine_transform(f);
      for (std::size_t q = 0; q < n; ++q) f[q] *= kinetic_[q];
      transform_.sine_transform(f);
      for (std::size_t q = 0; q < n; ++q) out[q] = f[q] + potential_[q] * in[q];
    }
  }

  BlockOperator block() const {
    return [this](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
      out.resize(in.rows(), in.cols());
      for (Eigen::Index c = 0; c < in.cols(); ++c) apply(in.col(c).data(), out.col(c).data());
    };
  }

  /// (kinetic + shift)^{-1}, applied spectrally.
  BlockOperator preconditioner(double shift) const {
    return [this, shift](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
      out.resize(in.rows(), in.cols());
      const std::size_t n = grid_.size();
      for (Eigen::Index c = 0; c < in.cols(); ++c) {
        if (grid_.boundary == Boundary::periodic) {
          std::vector<std::complex<double>> f(in.col(c).data(), in.col(c).data() + n);
          transform_.forward(f);
          for (std::size_t q = 0; q < n; ++q) f[q] /= kinetic_[q] + shift;
          transform_.backward(f);
          for (std::size_t q = 0; q < n; ++q) out(q, c) = f[q].real();
        } else {
          std::vector<double> f(in.col(c).data(), in.col(c).data() + n);
          transform_.sine_transform(f);
          for (std::size_t q = 0; q < n; ++q) f[q] /= kinetic_[q] + shift;
          transform_.sine_transform(f);
          for (std::size_t q = 0; q < n; ++q) out(q, c) = f[q];
        }
      }
    };
  }

 private:
  BoxGrid grid_;
  SpectralTransform transform_;
  std::vector<Vec3> centers_;
  std::vector<std::size_t> active_;
  double a_v_ = 0.0;
  bool w_omitted_ = false;
  std::vector<double> potential_;
  std::vector<double> kinetic_;
};

inline MultiCenterOperator multi_center_operator(const RadialPotential& v, const SoftShellPotential& U,
                                                 const MomentumCutoff& chi, double eps, double R,
                                                 const std::vector<Vec3>& centers, const BoxGrid& grid) {
  return MultiCenterOperator(v, U, chi, eps, R, centers, grid);
}

struct EigenSumResult {
  double sum = 0.0;
  std::vector<double> values;
  double max_residual = 0.0;
  int iterations = 0;
};

struct EigenSumOptions {
  int guard = 6;
  double tolerance = 1e-9;
  int max_iterations = 3000;
  std::uint64_t seed = 99;
};

inline EigenSumResult sum_lowest_eigenvalues(const MultiCenterOperator& op, int N, const EigenSumOptions& opt = {}) {
  require(N >= 1, "sum_lowest_eigenvalues: N must be >= 1");
  require(static_cast<std::size_t>(N + opt.guard) * 8 <= op.size(),
          "sum_lowest_eigenvalues: N too large for the grid");
  EigenSolveOptions eo;
  eo.wanted = N;
  eo.guard = opt.guard;
  eo.tolerance = opt.tolerance;
  eo.max_iterations = opt.max_iterations;
  eo.seed = opt.seed;
  const double shift = std::pow(2.0 * std::numbers::pi / op.grid().L, 2);
  eo.preconditioner = op.preconditioner(shift);
  const auto res = lowest_eigenpairs(op.block(), static_cast<Eigen::Index>(op.size()), eo);
  EigenSumResult out;
  for (int i = 0; i < N; ++i) {
    out.values.push_back(res.values(i));
    out.sum += res.values(i);
  }
  out.max_residual = res.residuals.maxCoeff();
  out.iterations = res.iterations;
  return out;
}

}  // namespace fermigas
