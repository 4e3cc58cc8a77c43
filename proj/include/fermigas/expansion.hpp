#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "fermigas/core/error.hpp"

namespace fermigas {

/// Diluteness above which the asymptotic formulas are flagged (not refused).
inline constexpr double diluteness_warning_threshold = 1e-2;

struct GasParameters {
  double rho = 0.0;
  int q = 2;
  double a_v = 0.0;
  std::optional<double> rho_up;
  std::optional<double> rho_down;
};

struct EnergyBreakdown {
  double free_term = 0.0;
  double interaction_term = 0.0;
  double lhy_term = 0.0;
  double total = 0.0;
  double diluteness = 0.0;
  bool diluteness_warning = false;
};

inline void validate(const GasParameters& p) {
  require(std::isfinite(p.rho) && p.rho > 0.0, "GasParameters: rho must be positive");
  require(p.q >= 1, "GasParameters: q must be an integer >= 1");
  require(std::isfinite(p.a_v) && p.a_v >= 0.0, "GasParameters: a_v must be nonnegative");
  require(p.rho_up.has_value() == p.rho_down.has_value(),
          "GasParameters: give both species densities or neither");
  if (p.rho_up) {
    require(*p.rho_up >= 0.0 && *p.rho_down >= 0.0, "GasParameters: species densities must be nonnegative");
    require(std::abs(*p.rho_up + *p.rho_down - p.rho) <= 1e-12 * p.rho,
            "GasParameters: rho_up + rho_down must equal rho");
  }
}

namespace detail {
// (3/5)(6 pi^2)^{2/3}
inline double free_fermi_coefficient() { return 0.6 * std::pow(6.0 * std::numbers::pi * std::numbers::pi, 2.0 / 3.0); }

inline void finish(EnergyBreakdown& e, double rho, double a_v) {
  e.total = e.free_term + e.interaction_term + e.lhy_term;
  e.diluteness = rho * a_v * a_v * a_v;
  e.diluteness_warning = e.diluteness > diluteness_warning_threshold;
}
}  // namespace detail

/// Two-species energy density: (3/5)(6 pi^2)^{2/3}(rho_up^{5/3} + rho_down^{5/3}) + 8 pi a rho_up rho_down.
inline double two_component_energy(double rho_up, double rho_down, double a_v) {
  require(std::isfinite(rho_up) && rho_up >= 0.0, "two_component_energy: rho_up must be nonnegative");
  require(std::isfinite(rho_down) && rho_down >= 0.0, "two_component_energy: rho_down must be nonnegative");
  require(std::isfinite(a_v) && a_v >= 0.0, "two_component_energy: a_v must be nonnegative");
  return detail::free_fermi_coefficient() * (std::pow(rho_up, 5.0 / 3.0) + std::pow(rho_down, 5.0 / 3.0)) +
         8.0 * std::numbers::pi * a_v * rho_up * rho_down;
}

/// Free Fermi gas with q equally populated spin states plus the leading interaction term.
/// With per-species densities set (q = 2 only) the two-species form is used instead.
inline EnergyBreakdown fermi_energy_density(const GasParameters& p) {
  validate(p);
  EnergyBreakdown e;
  if (p.rho_up) {
    require(p.q == 2, "fermi_energy_density: a species split needs q = 2");
    const double up = *p.rho_up, down = *p.rho_down;
    e.free_term = detail::free_fermi_coefficient() * (std::pow(up, 5.0 / 3.0) + std::pow(down, 5.0 / 3.0));
    e.interaction_term = 8.0 * std::numbers::pi * p.a_v * up * down;
  } else {
    const double q = p.q;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    e.free_term = 0.6 * std::pow(6.0 * pi2 / q, 2.0 / 3.0) * std::pow(p.rho, 5.0 / 3.0);
    e.interaction_term = 4.0 * std::numbers::pi * (1.0 - 1.0 / q) * p.a_v * p.rho * p.rho;
  }
  detail::finish(e, p.rho, p.a_v);
  return e;
}

/// Minimizer of two_component_energy on rho_up + rho_down = rho. For a_v >= 0 both
/// pieces are convex and symmetric, so the minimum sits at the equal split.
inline std::pair<double, double> optimal_polarization(double rho, double a_v) {
  require(std::isfinite(rho) && rho > 0.0, "optimal_polarization: rho must be positive");
  require(std::isfinite(a_v) && a_v >= 0.0, "optimal_polarization: a_v must be nonnegative");
  return {0.5 * rho, 0.5 * rho};
}

/// Dilute Bose gas: 4 pi a rho^2, optionally with the Lee-Huang-Yang correction.
inline EnergyBreakdown bose_energy_density(double rho, double a_v, bool include_lhy) {
  require(std::isfinite(rho) && rho > 0.0, "bose_energy_density: rho must be positive");
  require(std::isfinite(a_v) && a_v >= 0.0, "bose_energy_density: a_v must be nonnegative");
  EnergyBreakdown e;
  e.interaction_term = 4.0 * std::numbers::pi * a_v * rho * rho;
  if (include_lhy) {
    const double coefficient = 128.0 / (15.0 * std::sqrt(std::numbers::pi));
    e.lhy_term = e.interaction_term * coefficient * std::sqrt(rho * a_v * a_v * a_v);
  }
  detail::finish(e, rho, a_v);
  return e;
}

/// Finite-box counterpart of two_component_energy: exact kinetic energy of the
/// N lowest one-body levels of a Dirichlet (or periodic) cube of side L, plus the
/// thermodynamic interaction 8 pi a N_up N_down / L^3, all divided by L^3.
struct BoxEnergy {
  double kinetic = 0.0;      ///< total, not per volume
  double interaction = 0.0;  ///< total, not per volume
  double density = 0.0;      ///< (kinetic + interaction) / L^3
};

namespace detail {
// Sum of the n lowest values of (n1^2 + n2^2 + n3^2), n_i ranging over `lo..hi` (integers).
inline double lowest_level_sum(int n, int lo, int hi) {
  std::vector<long> levels;
  for (int a = lo; a <= hi; ++a)
    for (int b = lo; b <= hi; ++b)
      for (int c = lo; c <= hi; ++c) levels.push_back(static_cast<long>(a) * a + static_cast<long>(b) * b + static_cast<long>(c) * c);
  std::partial_sort(levels.begin(), levels.begin() + n, levels.end());
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(levels[i]);
  return s;
}
}  // namespace detail

/// Kinetic energy of the N lowest one-body states in a cube of side L.
inline double box_free_energy(int n, double L, bool periodic = false) {
  require(n >= 0, "box_free_energy: particle count must be nonnegative");
  require(L > 0.0, "box_free_energy: L must be positive");
  if (n == 0) return 0.0;
  const int reach = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n)))) + 2;
  const double pi = std::numbers::pi;
  if (periodic) return std::pow(2.0 * pi / L, 2) * detail::lowest_level_sum(n, -reach, reach);
  return std::pow(pi / L, 2) * detail::lowest_level_sum(n, 1, 2 * reach);
}

inline BoxEnergy two_component_box_energy(int n_up, int n_down, double a_v, double L, bool periodic = false) {
  require(a_v >= 0.0, "two_component_box_energy: a_v must be nonnegative");
  BoxEnergy e;
  e.kinetic = box_free_energy(n_up, L, periodic) + box_free_energy(n_down, L, periodic);
  const double volume = L * L * L;
  e.interaction = 8.0 * std::numbers::pi * a_v * n_up * n_down / volume;
  e.density = (e.kinetic + e.interaction) / volume;
  return e;
}

}  // namespace fermigas
