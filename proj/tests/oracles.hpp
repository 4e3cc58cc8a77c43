#pragma once

// Brute-force reference computations shared by the unit tests and the acceptance binary.

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <numeric>
#include <vector>

#include "fermigas/slater.hpp"

namespace oracle {

using fermigas::cplx;
using fermigas::Vec3;

// det by explicit signed sum over all permutations.
inline cplx permutation_determinant(const Eigen::MatrixXcd& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  cplx total = 0.0;
  do {
    int inversions = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) inversions += p[i] > p[j];
    cplx term = (inversions % 2 == 0) ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) term *= a(i, p[i]);
    total += term;
  } while (std::next_permutation(p.begin(), p.end()));
  return total;
}

inline double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// Calls visit(indices, weight) for every tuple of `count` quadrature nodes.
template <class F>
void for_each_tuple(const fermigas::Quadrature3& q, int count, F&& visit) {
  std::vector<std::size_t> idx(count, 0);
  if (count == 0) {
    visit(idx, 1.0);
    return;
  }
  while (true) {
    double w = 1.0;
    for (auto i : idx) w *= q.weights[i];
    visit(idx, w);
    int d = count - 1;
    while (d >= 0 && ++idx[d] == q.size()) idx[d--] = 0;
    if (d < 0) return;
  }
}

// <Phi|Phi> with Phi = (n!)^{-1/2} det[phi_a(x_i)], integrated over all n coordinates.
inline double brute_force_norm(const fermigas::OrbitalSet& s) {
  const int n = s.n;
  std::vector<Eigen::VectorXcd> values;
  for (const auto& x : s.quadrature.points) values.push_back(s.evaluate(x));
  double total = 0.0;
  Eigen::MatrixXcd a(n, n);
  for_each_tuple(s.quadrature, n, [&](const std::vector<std::size_t>& idx, double w) {
    for (int i = 0; i < n; ++i) a.row(i) = values[idx[i]].transpose();
    total += w * std::norm(permutation_determinant(a));
  });
  return total / factorial(n);
}

// m-particle density by marginalizing |Phi|^2 over the last n - m coordinates:
// rho_m = n! / (n - m)! * int |Phi|^2 / <Phi|Phi>.
inline double brute_force_density(const fermigas::OrbitalSet& s, const std::vector<Vec3>& fixed) {
  const int n = s.n, m = static_cast<int>(fixed.size());
  std::vector<Eigen::VectorXcd> values;
  for (const auto& x : s.quadrature.points) values.push_back(s.evaluate(x));
  Eigen::MatrixXcd a(n, n);
  for (int i = 0; i < m; ++i) a.row(i) = s.evaluate(fixed[i]).transpose();
  double total = 0.0;
  for_each_tuple(s.quadrature, n - m, [&](const std::vector<std::size_t>& idx, double w) {
    for (int i = m; i < n; ++i) a.row(i) = values[idx[i - m]].transpose();
    total += w * std::norm(permutation_determinant(a));
  });
  return total / factorial(n - m) / brute_force_norm(s);
}

// Random smooth complex orbitals on the unit cube: Gaussians times low-order polynomials.
inline fermigas::OrbitalSet random_orbitals(int n, std::uint64_t seed, std::size_t order = 3) {
  fermigas::Rng rng(seed);
  struct Coef {
    Vec3 center;
    double width;
    std::complex<double> c[4];
  };
  std::vector<Coef> coefs;
  for (int a = 0; a < n; ++a) {
    Coef k;
    k.center = {rng.uniform(), rng.uniform(), rng.uniform()};
    k.width = rng.uniform(0.5, 1.5);
    for (auto& c : k.c) c = {rng.normal(), rng.normal()};
    coefs.push_back(k);
  }
  fermigas::OrbitalSet s;
  s.n = n;
  s.id = "random";
  s.evaluate = [coefs](const Vec3& x) {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(coefs.size()));
    for (std::size_t a = 0; a < coefs.size(); ++a) {
      const auto& k = coefs[a];
      const Vec3 d = x - k.center;
      v(a) = std::exp(-fermigas::norm2(d) / (k.width * k.width)) * (k.c[0] + k.c[1] * d.x + k.c[2] * d.y + k.c[3] * d.z);
    }
    return v;
  };
  s.quadrature = fermigas::box_quadrature({0, 0, 0}, {1, 1, 1}, order);
  return s;
}

}  // namespace oracle
