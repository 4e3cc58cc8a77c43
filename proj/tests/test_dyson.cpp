#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

#include "fermigas/core/rng.hpp"
#include "fermigas/dyson.hpp"
#include "fermigas/expansion.hpp"

using namespace fermigas;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent discretization of the radial Dyson form in u = r phi:
//   int_{r_c}^R [u'^2 + l(l+1) u^2 / r^2 + (v/2 - a U) u^2] dr - u(R)^2 / R   against   int u^2 dr,
// u(r_c) = 0. Plain finite differences on a uniform mesh, trapezoidal mass, dense solve.
double fd_radial_minimum(const RadialPotential& v, const SoftShellPotential& U, double a, double R, int l, int n) {
  const double rc = v.hard_core_radius();
  const double h = (R - rc) / n;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n), off = Eigen::VectorXd::Constant(n - 1, -1.0 / h), mass(n);
  for (int i = 0; i < n; ++i) {
    const double r = rc + (i + 1) * h;
    const bool last = i == n - 1;
    mass(i) = last ? 0.5 * h : h;
    // potential averaged over the node's cell, so steps land to O(h)
    const double lo = r - 0.5 * h, hi = last ? r : r + 0.5 * h;
    double pot = 0.0;
    const int sub = 16;
    for (int s = 0; s < sub; ++s) {
      const double x = lo + (hi - lo) * (s + 0.5) / sub;
      pot += (0.5 * v(x) - a * U(x)) / sub;
    }
    diag(i) = mass(i) * (l * (l + 1) / (r * r) + pot) + (last ? 1.0 : 2.0) / h;
  }
  diag(n - 1) -= 1.0 / R;
  const Eigen::VectorXd s = mass.cwiseSqrt().cwiseInverse();
  for (int i = 0; i < n; ++i) diag(i) *= s(i) * s(i);
  for (int i = 0; i + 1 < n; ++i) off(i) *= s(i) * s(i + 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

TEST(SoftShell, NormalizedToFourPi) {
  for (auto [r0, r] : {std::pair{0.0, 1.0}, {1.0, 5.0}, {0.3, 0.31}}) {
    const auto U = make_soft_shell(r0, r);
    const auto rule = quad::composite(quad::gauss_legendre(6), r0, r, 50);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * U(rule.nodes[i]) * rule.nodes[i] * rule.nodes[i];
    EXPECT_NEAR(4.0 * kPi * s, 4.0 * kPi, 1e-12);
  }
  EXPECT_THROW(make_soft_shell(1.0, 1.0), PreconditionError);
  EXPECT_THROW(make_soft_shell(-0.1, 1.0), PreconditionError);
}

TEST(MomentumCutoff, GaussianKernelIsAnalytic) {
  const auto chi = MomentumCutoff::gaussian(1.0);
  EXPECT_NEAR(chi.kernel(0.0), 0.0634936359342410, 1e-15);
  EXPECT_NEAR(chi.chi(0.0), 0.0, 1e-15);
  EXPECT_NEAR(chi.chi(1.0), 1.0 - std::exp(-0.5), 1e-15);
}

TEST(MomentumCutoff, NumericalHankelTransformMatchesGaussian) {
  const double kc = 2.0;
  const auto gauss = MomentumCutoff::gaussian(kc);
  const auto custom = MomentumCutoff::custom(
      [kc](double p) { return 1.0 - std::exp(-p * p / (2.0 * kc * kc)); }, 12.0 * kc, 9.0 / kc);
  for (double x : {0.0, 0.1, 0.5, 1.0, 1.5}) {
    const double exact = gauss.kernel(x);
    EXPECT_NEAR(custom.kernel(x), exact, 1e-8 * gauss.kernel(0.0)) << "x=" << x;
  }
}

TEST(MomentumCutoff, DegenerateProfiles) {
  const auto full = MomentumCutoff::full();
  for (double x : {0.0, 0.3, 2.0}) EXPECT_EQ(full.kernel(x), 0.0);
  const auto none = MomentumCutoff::none();
  EXPECT_FALSE(none.has_kernel());
  EXPECT_THROW(none.kernel(0.0), PreconditionError);
  EXPECT_THROW(build_fR_wR(none, 1.0), PreconditionError);
  EXPECT_THROW(MomentumCutoff::custom([](double) { return 0.5; }, 1.0, 1.0), PreconditionError);
}

TEST(CutoffKernels, ZeroRadiusGivesZeroKernels) {
  const auto k = build_fR_wR(MomentumCutoff::gaussian(1.0), 0.0);
  for (double f : k.f.values) EXPECT_EQ(f, 0.0);
  for (double w : k.w.values) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(k.integral_w, 0.0);
}

TEST(CutoffKernels, BallSampleStaysInBall) {
  KernelOptions opt;
  const auto pts = detail::ball_sample(0.7, opt);
  EXPECT_EQ(pts.size(), 1u + static_cast<std::size_t>(opt.ball_shells * opt.ball_directions + opt.axis_points));
  for (const auto& y : pts) EXPECT_LE(norm(y), 0.7 * (1 + 1e-12));
}

TEST(CutoffKernels, EnvelopeDominatesSpotChecks) {
  const auto chi = MomentumCutoff::gaussian(1.5);
  const double R = 0.8;
  const auto k = build_fR_wR(chi, R);
  for (double w : k.w.values) EXPECT_GE(w, 0.0);
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const double r = 4.0 * rng.uniform();
    Vec3 y;
    do {
      y = {R * (2 * rng.uniform() - 1), R * (2 * rng.uniform() - 1), R * (2 * rng.uniform() - 1)};
    } while (norm(y) > R);
    const Vec3 x{0.0, 0.0, r};
    const double gap = std::abs(chi.kernel(norm(x - y)) - chi.kernel(r));
    EXPECT_GE(k.f(r), gap) << "r=" << r;
  }
}

TEST(CutoffKernels, SmallRadiusScalesLinearly) {
  const auto chi = MomentumCutoff::gaussian(1.0);
  const double i1 = build_fR_wR(chi, 0.01).integral_f;
  const double i2 = build_fR_wR(chi, 0.02).integral_f;
  EXPECT_NEAR(i2 / i1, 2.0, 0.02);
  // w_R integrates to (2 / pi^2) (int f_R)^2
  const auto k = build_fR_wR(chi, 0.5);
  EXPECT_NEAR(k.integral_w, 2.0 / (kPi * kPi) * k.integral_f * k.integral_f, 1e-12 * k.integral_w);
  EXPECT_NEAR(k.w.volume_integral(), k.integral_w, 1e-10 * k.integral_w);
}

TEST(RadialGap, FreeFormIsNonnegative) {
  const auto rep = dyson_gap_radial(RadialPotential::zero(), make_soft_shell(0.5, 2.0), 2.0, 4);
  EXPECT_EQ(rep.a_v, 0.0);
  for (double m : rep.channel_minima) EXPECT_GE(m, -rep.tolerance);
  EXPECT_TRUE(rep.certified);
}

TEST(RadialGap, HardCoreShellIsCertified) {
  const auto rep = dyson_gap_radial(RadialPotential::hard_core(1.0), make_soft_shell(1.0, 5.0), 5.0, 4);
  ASSERT_EQ(rep.channel_minima.size(), 5u);
  EXPECT_GE(rep.minimum, -1e-8 * rep.energy_scale);
  EXPECT_TRUE(rep.certified);
  // higher channels only add centrifugal energy
  for (std::size_t l = 1; l < rep.channel_minima.size(); ++l)
    EXPECT_GE(rep.channel_minima[l], rep.channel_minima[l - 1]);
}

TEST(RadialGap, MatchesIndependentFiniteDifferences) {
  struct Case {
    RadialPotential v;
    SoftShellPotential U;
    double R;
  };
  const std::vector<Case> cases{
      {RadialPotential::square(2.0, 1.0), make_soft_shell(1.0, 5.0), 5.0},
      {RadialPotential::hard_core(1.0), make_soft_shell(1.0, 5.0), 5.0},
      {RadialPotential::shell(4.0, 0.5, 1.0), make_soft_shell(1.0, 3.0), 3.0},
  };
  for (const auto& c : cases) {
    const auto rep = dyson_gap_radial(c.v, c.U, c.R, 2);
    for (int l = 0; l <= 2; ++l) {
      const double fd = fd_radial_minimum(c.v, c.U, rep.a_v, c.R, l, 4000);
      EXPECT_NEAR(rep.channel_minima[l], fd, 2e-3 * (1.0 + std::abs(fd))) << "l=" << l;
    }
  }
}

TEST(RadialGap, BisectionMatchesDenseGeneralizedSolve) {
  const auto v = RadialPotential::square(3.0, 1.0);
  const auto U = make_soft_shell(1.0, 4.0);
  const double a = solve_zero_energy(v).a_v;
  const auto nodes = detail::radial_gap_mesh(v, U, 4.0, 120);
  for (int l : {0, 3}) {
    const auto t = detail::assemble_radial_channel(v, U, a, nodes, l, false);
    const Eigen::Index n = static_cast<Eigen::Index>(t.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n), B = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = t.k_diag[i];
      B(i, i) = t.b_diag[i];
      if (i + 1 < n) {
        K(i, i + 1) = K(i + 1, i) = t.k_off[i];
        B(i, i + 1) = B(i + 1, i) = t.b_off[i];
      }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, B, Eigen::EigenvaluesOnly);
    EXPECT_NEAR(detail::smallest_generalized_eigenvalue(t), es.eigenvalues()(0), 1e-9 * (1 + std::abs(es.eigenvalues()(0))));
  }
}

TEST(RadialGap, ShellInsidePotentialRangeIsRejected) {
  EXPECT_THROW(dyson_gap_radial(RadialPotential::square(2.0, 1.0), make_soft_shell(0.5, 3.0), 3.0, 0),
               PreconditionError);
  EXPECT_THROW(dyson_gap_radial(RadialPotential::square(2.0, 1.0), make_soft_shell(1.0, 3.0), 2.0, 0),
               PreconditionError);
}

TEST(Lanczos, TopEigenvalueOfDenseMatrix) {
  const int n = 200;
  Rng rng(4);
  Eigen::MatrixXd q = Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return rng.normal(); });
  Eigen::MatrixXd a = q * q.transpose() / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const auto top = detail::lanczos_top([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x); }, n, 200,
                                       1e-12, 1);
  EXPECT_TRUE(top.converged);
  EXPECT_NEAR(top.value, es.eigenvalues()(n - 1), 1e-10 * es.eigenvalues()(n - 1));
}

namespace {

// Grid values of prod_j sqrt(2) cos|sin(n_j u (x_j - L/2)) for one sector basis function.
std::vector<double> sector_basis_function(const BoxGrid& g, int sector, const std::array<int, 3>& n) {
  std::vector<double> out(g.size());
  const double u = 2.0 * kPi / g.L;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 x = g.point(i);
    double val = 1.0;
    for (int d = 0; d < 3; ++d) {
      const double t = n[d] * u * (x[d] - 0.5 * g.L);
      if (sector >> d & 1) val *= std::sqrt(2.0) * std::sin(t);
      else if (n[d] != 0) val *= std::sqrt(2.0) * std::cos(t);
    }
    out[i] = val;
  }
  return out;
}

}  // namespace

TEST(GeneralizedDyson, SectorMatricesMatchMatrixFreeOperator) {
  const BoxGrid g{4.0, 8, Boundary::periodic};
  const GeneralizedDysonOperator op(RadialPotential::square(50.0, 0.4), make_soft_shell(0.4, 1.0),
                                    MomentumCutoff::gaussian(2.0), 0.5, 1.0, g);
  const double m3 = static_cast<double>(g.size());
  for (int sector : {0, 3, 5, 7}) {
    const auto modes = op.sector_modes(sector);
    const Eigen::MatrixXd a = op.sector_matrix(sector);
    std::vector<std::vector<double>> basis;
    for (const auto& n : modes) basis.push_back(sector_basis_function(g, sector, n));
    std::vector<double> applied(g.size());
    double scale = a.cwiseAbs().maxCoeff();
    for (std::size_t j = 0; j < modes.size(); j += 3) {
      op.apply(basis[j].data(), applied.data());
      for (std::size_t i = 0; i < modes.size(); ++i) {
        double s = 0.0;
        for (std::size_t q = 0; q < g.size(); ++q) s += basis[i][q] * applied[q];
        EXPECT_NEAR(s / m3, a(i, j), 1e-10 * scale) << "sector " << sector << " i=" << i << " j=" << j;
      }
    }
  }
}

TEST(GeneralizedDyson, OperatorIsSymmetric) {
  const BoxGrid g{6.0, 12, Boundary::periodic};
  const GeneralizedDysonOperator op(RadialPotential::hard_core(0.5), make_soft_shell(0.5, 1.0),
                                    MomentumCutoff::gaussian(1.5), 0.5, 1.0, g);
  Rng rng(8);
  std::vector<double> x(g.size()), y(g.size()), ax(g.size()), ay(g.size());
  for (int t = 0; t < 3; ++t) {
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    op.apply(x.data(), ax.data());
    op.apply(y.data(), ay.data());
    double yax = 0.0, axy = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      yax += y[i] * ax[i];
      axy += ay[i] * x[i];
      scale += std::abs(y[i] * ax[i]);
    }
    EXPECT_NEAR(yax, axy, 1e-10 * scale);
  }
}

TEST(GeneralizedDyson, FreeOperatorIsNonnegative) {
  const BoxGrid g{4.0, 12, Boundary::periodic};
  const auto rep = generalized_dyson_gap(RadialPotential::zero(), make_soft_shell(0.5, 1.0),
                                         MomentumCutoff::gaussian(2.0), 0.5, 1.0, g);
  EXPECT_EQ(rep.a_v, 0.0);
  EXPECT_TRUE(rep.certified);
  EXPECT_GE(rep.minimum, -1e-12);
  EXPECT_EQ(rep.sector_minima.size(), 8u);
  EXPECT_EQ(rep.dimension, 11u * 11u * 11u);
}

TEST(GeneralizedDyson, FullCutoffReducesToDysonLemma) {
  const BoxGrid g{4.0, 16, Boundary::periodic};
  const auto v = RadialPotential::square(40.0, 0.5);
  const auto U = make_soft_shell(0.5, 1.0);
  const auto rep = generalized_dyson_gap(v, U, MomentumCutoff::full(), 0.5, 1.0, g);
  EXPECT_EQ(rep.integral_w, 0.0);
  EXPECT_TRUE(rep.certified);
  EXPECT_GE(rep.minimum, -rep.tolerance);
  // Functions living outside the ball carry no energy at all, so the whole-space minimum
  // sits at 0 and below the ball-restricted radial minimum rather than above it.
  const auto radial = dyson_gap_radial(v, U, 1.0, 4);
  EXPECT_TRUE(radial.certified);
  EXPECT_LE(rep.minimum, radial.minimum + rep.tolerance);
}

TEST(GeneralizedDyson, RegularizedHardCoreIsCertifiedAcrossEps) {
  const BoxGrid g{4.0, 16, Boundary::periodic};
  std::vector<double> minima;
  for (double eps : {0.25, 0.5, 0.75}) {
    const auto rep = generalized_dyson_gap(RadialPotential::hard_core(0.5), make_soft_shell(0.5, 1.0),
                                           MomentumCutoff::gaussian(2.0), eps, 1.0, g);
    EXPECT_NEAR(rep.barrier_height, 1e4 / 0.25, 1e-9);
    EXPECT_LT(rep.a_v, 0.5);
    EXPECT_GT(rep.a_v, 0.49);
    EXPECT_TRUE(rep.certified) << "eps=" << eps;
    EXPECT_GE(rep.minimum, -rep.tolerance);
    minima.push_back(rep.minimum);
  }
  // continuity across the scan: neighbouring minima stay within the certification scale
  for (std::size_t i = 1; i < minima.size(); ++i) EXPECT_LT(std::abs(minima[i] - minima[i - 1]), 0.1);
}

TEST(GeneralizedDyson, Preconditions) {
  const auto v = RadialPotential::hard_core(0.5);
  const auto U = make_soft_shell(0.5, 1.0);
  const auto chi = MomentumCutoff::gaussian(2.0);
  const BoxGrid periodic{4.0, 8, Boundary::periodic};
  EXPECT_THROW(generalized_dyson_gap(v, U, chi, 0.0, 1.0, periodic), PreconditionError);
  EXPECT_THROW(generalized_dyson_gap(v, U, chi, 1.0, 1.0, periodic), PreconditionError);
  EXPECT_THROW(generalized_dyson_gap(v, U, chi, 0.5, 0.8, periodic), PreconditionError);
  EXPECT_THROW(generalized_dyson_gap(v, U, chi, 0.5, 1.0, BoxGrid{4.0, 8, Boundary::dirichlet}), PreconditionError);
  EXPECT_THROW(generalized_dyson_gap(v, U, chi, 0.5, 1.0, BoxGrid{1.5, 8, Boundary::periodic}), PreconditionError);
}

TEST(MultiCenter, CloseCentersAreExcluded) {
  const BoxGrid g{6.0, 12, Boundary::periodic};
  const auto op = multi_center_operator(RadialPotential::hard_core(0.2), make_soft_shell(0.2, 0.6),
                                        MomentumCutoff::gaussian(3.0), 0.5, 0.6, {{2.0, 3.0, 3.0}, {2.8, 3.0, 3.0}}, g);
  EXPECT_EQ(op.excluded_count(), 2u);
  for (double p : op.potential()) EXPECT_EQ(p, 0.0);
  const auto lone = multi_center_operator(RadialPotential::hard_core(0.2), make_soft_shell(0.2, 0.6),
                                          MomentumCutoff::gaussian(3.0), 0.5, 0.6, {{2.0, 3.0, 3.0}, {4.5, 3.0, 3.0}}, g);
  EXPECT_EQ(lone.excluded_count(), 0u);
}

TEST(MultiCenter, FreeDirichletSumIsExact) {
  const double L = 3.0;
  const BoxGrid g{L, 16, Boundary::dirichlet};
  const auto op = multi_center_operator(RadialPotential::hard_core(0.1), make_soft_shell(0.1, 0.3),
                                        MomentumCutoff::none(), 0.5, 0.3, {}, g);
  // 7 lowest triples: (1,1,1) and the permutations of (1,1,2), (1,2,2): 3 + 3*6 + 3*9 = 48
  const auto seven = sum_lowest_eigenvalues(op, 7);
  EXPECT_NEAR(seven.sum, 48.0 * kPi * kPi / (L * L), 1e-7);
  EXPECT_NEAR(seven.sum, box_free_energy(7, L), 1e-7);
  const auto one = sum_lowest_eigenvalues(op, 1);
  EXPECT_NEAR(one.sum, 3.0 * kPi * kPi / (L * L), 1e-8);
}

TEST(MultiCenter, NoCutoffMatchesDenseSolve) {
  const BoxGrid g{3.0, 12, Boundary::dirichlet};
  const auto op = multi_center_operator(RadialPotential::hard_core(0.2), make_soft_shell(0.2, 0.6),
                                        MomentumCutoff::none(), 0.5, 0.6, {{1.5, 1.5, 1.5}}, g);
  EXPECT_TRUE(op.w_omitted());
  const Eigen::Index n = static_cast<Eigen::Index>(op.size());
  Eigen::MatrixXd dense(n, n);
  std::vector<double> e(n, 0.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    op.apply(e.data(), dense.col(j).data());
    e[j] = 0.0;
  }
  EXPECT_LT((dense - dense.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
  const auto res = sum_lowest_eigenvalues(op, 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(res.values[i], es.eigenvalues()(i), 1e-7);
}

TEST(MultiCenter, SingleCenterShiftIsFirstOrder) {
  const double L = 8.0, a = 1e-3, eps = 0.5, R = 0.3;
  const BoxGrid g{L, 16, Boundary::periodic};
  const auto chi = MomentumCutoff::gaussian(3.0);
  const auto op = multi_center_operator(RadialPotential::hard_core(a), make_soft_shell(a, R), chi, eps, R,
                                        {{L / 2, L / 2, L / 2}}, g);
  const auto res = sum_lowest_eigenvalues(op, 1);
  // the constant mode sees the average of the potential; second order is O(a^2)
  const auto k = build_fR_wR(chi, R);
  const double shift = ((1 - eps) * a * 4 * kPi - a / eps * k.integral_w) / (L * L * L);
  EXPECT_NEAR(res.sum, shift, 0.05 * std::abs(shift));
}
