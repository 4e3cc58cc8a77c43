#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "fermigas/core/blocking.hpp"
#include "fermigas/core/error.hpp"
#include "fermigas/core/rng.hpp"
#include "fermigas/core/vec3.hpp"
#include "fermigas/expansion.hpp"
#include "fermigas/scattering.hpp"
#include "fermigas/slater.hpp"

namespace fermigas {

/// N lowest Dirichlet sine modes of [0, L]^3 as an orbital set.
inline OrbitalSet dirichlet_orbitals(double L, int N) {
  require(N >= 1, "dirichlet_orbitals: N must be >= 1");
  require(std::isfinite(L) && L > 0.0, "dirichlet_orbitals: L must be positive");
  return box_orbitals(N, L);
}

/// True when the N lowest modes fill complete degeneracy levels (1, 4, 7, 10, 13, 19, ...).
inline bool is_closed_shell(int N) {
  if (N <= 0) return true;
  const auto modes = lowest_box_modes(N + 1);
  auto level = [](const std::array<int, 3>& n) { return n[0] * n[0] + n[1] * n[1] + n[2] * n[2]; };
  return level(modes[N - 1]) != level(modes[N]);
}

struct TrialStateSpec {
  int n_up = 0;
  int n_down = 0;
  double L = 0.0;
  RadialPotential potential;
  PairFunction f;   ///< opposite-spin factor, cutoff b
  JastrowFactor g;  ///< same-spin factor, ramp R0 -> s
  std::vector<std::string> warnings;

  int n_total() const { return n_up + n_down; }
  double volume() const { return L * L * L; }
  double density() const { return n_total() / volume(); }
  bool open_shell() const { return !is_closed_shell(n_up) || !is_closed_shell(n_down); }
};

struct TrialStateOptions {
  double b = 0.0;  ///< 0 selects min(0.4 rho^{-1/3}, L/8)
  double s = 0.0;  ///< 0 selects min(0.25 rho^{-1/3}, b)
  double smoothing = 0.8;
};

inline TrialStateSpec make_trial_state(int n_up, int n_down, double L, const RadialPotential& v,
                                       const TrialStateOptions& opt = {}) {
  require(n_up >= 0 && n_down >= 0 && n_up + n_down >= 1, "make_trial_state: need at least one particle");
  require(std::isfinite(L) && L > 0.0, "make_trial_state: L must be positive");
  TrialStateSpec t;
  t.n_up = n_up;
  t.n_down = n_down;
  t.L = L;
  t.potential = v;
  const double spacing = std::cbrt(1.0 / t.density());
  const double b = opt.b > 0.0 ? opt.b : std::min(0.4 * spacing, L / 8.0);
  const double s = opt.s > 0.0 ? opt.s : std::min(0.25 * spacing, b);
  if (t.open_shell()) t.warnings.push_back("open shell: degenerate modes chosen lexicographically");
  if (v.vanishes()) return t;
  const double R0 = v.range();
  require(s > R0, "make_trial_state: Jastrow invariant R0 < s violated");
  require(s <= b, "make_trial_state: Jastrow invariant s <= b violated");
  require(b < 0.5 * L, "make_trial_state: cutoff b must be below L/2");
  if (s > 0.5 * spacing) t.warnings.push_back("s exceeds half the mean spacing");
  t.f = make_pair_function(solve_zero_energy(v), b).smoothed(opt.smoothing);
  t.g = make_jastrow(R0, s);
  return t;
}

struct Configuration {
  std::vector<Vec3> x;  ///< spin up
  std::vector<Vec3> y;  ///< spin down
  friend bool operator==(const Configuration&, const Configuration&) = default;
};

/// Trial wavefunction evaluator with cached Slater matrices for one configuration.
/// Particles are indexed up first, then down.
class TrialWavefunction {
 public:
  using real = long double;
  using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic>;

  explicit TrialWavefunction(const TrialStateSpec& spec) : spec_(spec) {
    modes_[0] = lowest_box_modes(spec.n_up);
    modes_[1] = lowest_box_modes(spec.n_down);
    for (int s = 0; s < 2; ++s) {
      const int n = count(s);
      A_[s] = Mat::Zero(n, n);
      inv_[s] = Mat::Zero(n, n);
    }
  }

  const TrialStateSpec& spec() const { return spec_; }
  int count(int species) const { return species == 0 ? spec_.n_up : spec_.n_down; }
  int species(int k) const { return k < spec_.n_up ? 0 : 1; }
  int index(int k) const { return k < spec_.n_up ? k : k - spec_.n_up; }
  const std::vector<Vec3>& positions() const { return pos_; }

  Configuration configuration() const {
    Configuration c;
    c.x.assign(pos_.begin(), pos_.begin() + spec_.n_up);
    c.y.assign(pos_.begin() + spec_.n_up, pos_.end());
    return c;
  }

  /// Loads a configuration and returns log|Psi| (-inf on a node or outside the box).
  double set(const Configuration& c) {
    require(static_cast<int>(c.x.size()) == spec_.n_up && static_cast<int>(c.y.size()) == spec_.n_down,
            "TrialWavefunction: configuration does not match particle counts");
    pos_ = c.x;
    pos_.insert(pos_.end(), c.y.begin(), c.y.end());
    for (const auto& p : pos_)
      if (!inside(p)) return log_psi_ = -inf();
    double total = 0.0;
    for (int s = 0; s < 2; ++s) {
      const int n = count(s);
      if (n == 0) continue;
      for (int i = 0; i < n; ++i) A_[s].row(i) = orbital_row(s, pos_[offset(s) + i]);
      const Eigen::PartialPivLU<Mat> lu(A_[s]);
      const real ld = log_abs_det(lu);
      if (!std::isfinite(static_cast<double>(ld))) return log_psi_ = -inf();
      inv_[s] = lu.inverse();
      total += static_cast<double>(ld);
    }
    for (int k = 0; k < n_total(); ++k)
      for (int j = k + 1; j < n_total(); ++j) {
        const double v = log_pair(k, j, pos_[k], pos_[j]);
        if (!std::isfinite(v)) return log_psi_ = -inf();
        total += v;
      }
    return log_psi_ = total;
  }

  double log_psi() const { return log_psi_; }

  /// log|Psi(moved)| - log|Psi| for particle k moved to p; -inf when the new state is a node.
  double log_ratio(int k, const Vec3& p) const {
    if (!inside(p)) return -inf();
    const int s = species(k), i = index(k);
    const auto row = orbital_row(s, p);
    const real det_ratio = row.dot(inv_[s].col(i));
    if (det_ratio == 0.0L) return -inf();
    double delta = static_cast<double>(std::log(std::fabs(det_ratio)));
    for (int j = 0; j < n_total(); ++j) {
      if (j == k) continue;
      const double after = log_pair(k, j, p, pos_[j]);
      if (!std::isfinite(after)) return -inf();
      delta += after - log_pair(k, j, pos_[k], pos_[j]);
    }
    return delta;
  }

  /// Commits a move whose log ratio was finite.
  void move(int k, const Vec3& p, double delta) {
    const int s = species(k), i = index(k);
    pos_[k] = p;
    A_[s].row(i) = orbital_row(s, p);
    inv_[s] = Eigen::PartialPivLU<Mat>(A_[s]).inverse();
    log_psi_ += delta;
  }

  /// Delta_k Psi / Psi for every particle.
  std::vector<double> laplacian_ratios() const {
    std::vector<double> out(n_total());
    for (int k = 0; k < n_total(); ++k) {
      const int s = species(k), i = index(k);
      Vec3 gd{};
      real ld = 0.0L;
      const auto& modes = modes_[s];
      for (std::size_t a = 0; a < modes.size(); ++a) {
        const real w = inv_[s](static_cast<Eigen::Index>(a), i);
        const ModeDerivatives m = mode_derivatives(modes[a], pos_[k]);
        for (int d = 0; d < 3; ++d) gd[d] += static_cast<double>(m.grad[d] * w);
        ld += m.laplacian * w;
      }
      Vec3 gj{};
      double lj = 0.0;
      for (int j = 0; j < n_total(); ++j) {
        if (j == k) continue;
        const Vec3 d = pos_[k] - pos_[j];
        const double r = norm(d);
        const RadialProfile p = pair_profile(k, j, r);
        if (p.d1 == 0.0 && p.d2 == 0.0) continue;
        const double u1 = p.d1 / p.value;
        const double u2 = p.d2 / p.value - u1 * u1;
        gj += d * (u1 / r);
        lj += u2 + 2.0 * u1 / r;
      }
      out[k] = static_cast<double>(ld) + 2.0 * dot(gd, gj) + norm2(gj) + lj;
    }
    return out;
  }

  double potential_energy() const {
    if (spec_.potential.vanishes()) return 0.0;
    const double reach = spec_.potential.support_end();
    double total = 0.0;
    for (int k = 0; k < n_total(); ++k)
      for (int j = k + 1; j < n_total(); ++j) {
        const double r = norm(pos_[k] - pos_[j]);
        // Psi vanishes inside a hard core, so only the finite part is ever evaluated.
        if (r < reach && r >= spec_.potential.hard_core_radius()) total += spec_.potential(r);
      }
    return total;
  }

  double local_energy() const {
    double e = potential_energy();
    for (double l : laplacian_ratios()) e -= l;
    return e;
  }

  /// Local kinetic energy of the down species, whose average is T(Psi) for Y.
  double kinetic_down() const {
    const auto l = laplacian_ratios();
    double t = 0.0;
    for (int k = spec_.n_up; k < n_total(); ++k) t -= l[k];
    return t;
  }

 private:
  struct ModeDerivatives {
    std::array<real, 3> grad;
    real laplacian;
  };

  static double inf() { return std::numeric_limits<double>::infinity(); }
  int n_total() const { return spec_.n_up + spec_.n_down; }
  int offset(int s) const { return s == 0 ? 0 : spec_.n_up; }
  bool inside(const Vec3& p) const {
    for (int d = 0; d < 3; ++d)
      if (!(p[d] > 0.0 && p[d] < spec_.L)) return false;
    return true;
  }

  static real log_abs_det(const Eigen::PartialPivLU<Mat>& lu) {
    real s = 0.0L;
    const Mat& m = lu.matrixLU();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, i) == 0.0L) return -std::numeric_limits<real>::infinity();
      s += std::log(std::fabs(m(i, i)));
    }
    return s;
  }

  Eigen::Matrix<real, 1, Eigen::Dynamic> orbital_row(int s, const Vec3& p) const {
    const auto& modes = modes_[s];
    Eigen::Matrix<real, 1, Eigen::Dynamic> row(static_cast<Eigen::Index>(modes.size()));
    const real c = std::pow(2.0L / spec_.L, 1.5L);
    for (std::size_t a = 0; a < modes.size(); ++a) {
      real v = c;
      for (int d = 0; d < 3; ++d) v *= std::sin(modes[a][d] * std::numbers::pi_v<real> * p[d] / spec_.L);
      row(static_cast<Eigen::Index>(a)) = v;
    }
    return row;
  }

  ModeDerivatives mode_derivatives(const std::array<int, 3>& n, const Vec3& p) const {
    const real c = std::pow(2.0L / spec_.L, 1.5L);
    std::array<real, 3> sn, cs, k;
    for (int d = 0; d < 3; ++d) {
      k[d] = n[d] * std::numbers::pi_v<real> / spec_.L;
      sn[d] = std::sin(k[d] * p[d]);
      cs[d] = std::cos(k[d] * p[d]);
    }
    ModeDerivatives m;
    m.grad = {c * k[0] * cs[0] * sn[1] * sn[2], c * sn[0] * k[1] * cs[1] * sn[2], c * sn[0] * sn[1] * k[2] * cs[2]};
    m.laplacian = -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * c * sn[0] * sn[1] * sn[2];
    return m;
  }

  RadialProfile pair_profile(int k, int j, double r) const {
    return species(k) == species(j) ? spec_.g(r) : spec_.f(r);
  }

  double log_pair(int k, int j, const Vec3& a, const Vec3& b) const {
    const double v = pair_profile(k, j, norm(a - b)).value;
    return v > 0.0 ? std::log(v) : -inf();
  }

  TrialStateSpec spec_;
  std::array<std::vector<std::array<int, 3>>, 2> modes_;
  std::array<Mat, 2> A_;
  std::array<Mat, 2> inv_;
  std::vector<Vec3> pos_;
  double log_psi_ = -std::numeric_limits<double>::infinity();
};

inline double log_psi(const TrialStateSpec& spec, const Configuration& c) { return TrialWavefunction(spec).set(c); }

inline double local_energy(const TrialStateSpec& spec, const Configuration& c) {
  TrialWavefunction w(spec);
  require(std::isfinite(w.set(c)), "local_energy: configuration is a node of the trial state");
  return w.local_energy();
}

/// Metropolis walk on |Psi|^2 with single-particle uniform cube moves of half-width `step`.
class MetropolisChain {
 public:
  MetropolisChain(const TrialStateSpec& spec, double step, std::uint64_t seed) : psi_(spec), rng_(seed), step_(step) {
    require(std::isfinite(step) && step > 0.0, "MetropolisChain: step size must be positive");
    const double L = spec.L;
    for (int attempt = 0; attempt < 100000; ++attempt) {
      Configuration c;
      for (int i = 0; i < spec.n_up; ++i) c.x.push_back({rng_.uniform(0, L), rng_.uniform(0, L), rng_.uniform(0, L)});
      for (int i = 0; i < spec.n_down; ++i) c.y.push_back({rng_.uniform(0, L), rng_.uniform(0, L), rng_.uniform(0, L)});
      if (std::isfinite(psi_.set(c))) return;
    }
    throw ConvergenceError("MetropolisChain: no admissible starting configuration found", 0.0);
  }

  /// One attempted move per particle, in index order.
  void sweep() {
    const int n = psi_.spec().n_total();
    for (int k = 0; k < n; ++k) {
      const Vec3 p = psi_.positions()[k] +
                     Vec3{rng_.uniform(-step_, step_), rng_.uniform(-step_, step_), rng_.uniform(-step_, step_)};
      const double delta = psi_.log_ratio(k, p);
      ++attempted_;
      if (!std::isfinite(delta)) {
        rng_.uniform();  // keep the stream aligned whether or not the proposal is a node
        continue;
      }
      if (delta >= 0.0 || rng_.uniform() < std::exp(2.0 * delta)) {
        psi_.move(k, p, delta);
        ++accepted_;
      }
    }
  }

  double acceptance() const { return attempted_ ? static_cast<double>(accepted_) / attempted_ : 0.0; }
  void reset_counters() { attempted_ = accepted_ = 0; }
  double step() const { return step_; }
  void set_step(double s) { step_ = s; }
  const TrialWavefunction& state() const { return psi_; }

 private:
  TrialWavefunction psi_;
  Rng rng_;
  double step_;
  std::uint64_t attempted_ = 0, accepted_ = 0;
};

inline double default_step(const TrialStateSpec& spec) {
  return std::min(0.3 * std::cbrt(1.0 / spec.density()), 0.25 * spec.L);
}

/// Retunes the step toward 50% acceptance in windows of `window` sweeps.
inline void equilibrate(MetropolisChain& chain, std::size_t sweeps, bool tune, std::size_t window = 50) {
  for (std::size_t done = 0; done < sweeps;) {
    chain.reset_counters();
    const std::size_t n = std::min(window, sweeps - done);
    for (std::size_t i = 0; i < n; ++i) chain.sweep();
    done += n;
    if (tune) {
      const double factor = std::clamp(chain.acceptance() / 0.5, 0.5, 2.0);
      chain.set_step(std::min(chain.step() * factor, 0.5 * chain.state().spec().L));
    }
  }
  chain.reset_counters();
}

/// Configurations after each of `sweeps` sweeps.
inline std::vector<Configuration> metropolis_chain(const TrialStateSpec& spec, std::size_t sweeps, double step,
                                                   std::uint64_t seed, std::size_t equilibration = 0) {
  require(step > 0.0, "metropolis_chain: step size must be positive");
  std::vector<Configuration> out;
  if (sweeps == 0) return out;
  MetropolisChain chain(spec, step, seed);
  equilibrate(chain, equilibration, false);
  out.reserve(sweeps);
  for (std::size_t i = 0; i < sweeps; ++i) {
    chain.sweep();
    out.push_back(chain.state().configuration());
  }
  return out;
}

struct VmcOptions {
  std::size_t equilibration_sweeps = 1000;
  std::size_t sweeps = 10000;
  double step = 0.0;  ///< 0 selects default_step
  bool tune = true;
  std::vector<std::uint64_t> seeds{1};
  int threads = 1;
  std::size_t min_blocks = 20;
};

struct VmcChainResult {
  std::uint64_t seed = 0;
  double mean = 0.0;
  double error = 0.0;
  double variance = 0.0;
  double acceptance = 0.0;
  double step = 0.0;
  std::size_t samples = 0;
  std::size_t block_length = 1;
  std::vector<double> block_means;
};

struct VmcResult {
  double energy = 0.0;
  double error = 0.0;
  double variance = 0.0;
  double acceptance = 0.0;
  std::size_t samples = 0;
  std::vector<std::uint64_t> seeds;
  double E0_finite = 0.0;
  bool open_shell = false;
  std::vector<VmcChainResult> chains;
  std::vector<std::string> warnings;
};

inline VmcChainResult run_vmc_chain(const TrialStateSpec& spec, const VmcOptions& opt, std::uint64_t seed) {
  const double step = opt.step > 0.0 ? opt.step : default_step(spec);
  MetropolisChain chain(spec, step, seed);
  equilibrate(chain, opt.equilibration_sweeps, opt.tune);
  std::vector<double> series;
  series.reserve(opt.sweeps);
  for (std::size_t i = 0; i < opt.sweeps; ++i) {
    chain.sweep();
    series.push_back(chain.state().local_energy());
  }
  const BlockingResult b = blocking_analysis(series, opt.min_blocks);
  VmcChainResult r;
  r.seed = seed;
  r.mean = b.mean;
  r.error = b.error;
  r.variance = b.variance;
  r.acceptance = chain.acceptance();
  r.step = chain.step();
  r.samples = series.size();
  r.block_length = b.block_length;
  for (std::size_t i = 0; i + b.block_length <= series.size(); i += b.block_length) {
    double s = 0.0;
    for (std::size_t j = i; j < i + b.block_length; ++j) s += series[j];
    r.block_means.push_back(s / static_cast<double>(b.block_length));
  }
  return r;
}

/// Variational energy of the trial state from independent chains, one per seed.
/// Chains are merged in seed-list order, so the result does not depend on the thread count.
inline VmcResult vmc_upper_bound(const TrialStateSpec& spec, const VmcOptions& opt) {
  require(!opt.seeds.empty(), "vmc_upper_bound: at least one seed required");
  require(opt.equilibration_sweeps >= 1000, "vmc_upper_bound: need at least 1000 equilibration sweeps");
  require(opt.sweeps >= opt.min_blocks, "vmc_upper_bound: insufficient samples for blocking");
  VmcResult out;
  out.seeds = opt.seeds;
  out.chains.resize(opt.seeds.size());
  const std::size_t workers = std::clamp<std::size_t>(opt.threads, 1, opt.seeds.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < opt.seeds.size(); ++i) out.chains[i] = run_vmc_chain(spec, opt, opt.seeds[i]);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < opt.seeds.size(); i += workers)
            out.chains[i] = run_vmc_chain(spec, opt, opt.seeds[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  double n = 0.0, sum = 0.0, acc = 0.0, var = 0.0;
  for (const auto& c : out.chains) {
    n += static_cast<double>(c.samples);
    sum += c.mean * c.samples;
    acc += c.acceptance * c.samples;
    var += c.variance * c.samples;
  }
  out.energy = sum / n;
  out.acceptance = acc / n;
  out.variance = var / n;
  double e2 = 0.0;
  for (const auto& c : out.chains) e2 += std::pow(c.samples / n * c.error, 2);
  out.error = std::sqrt(e2);
  out.samples = static_cast<std::size_t>(n);
  out.E0_finite = box_free_energy(spec.n_up, spec.L) + box_free_energy(spec.n_down, spec.L);
  out.open_shell = spec.open_shell();
  out.warnings = spec.warnings;
  if (out.acceptance < 0.1 || out.acceptance > 0.9) out.warnings.push_back("acceptance outside [0.1, 0.9]");
  return out;
}

struct IrDiagnostic {
  double R = 0.0;
  double mean_ir = 0.0;
  double ir_error = 0.0;  ///< naive standard error, ignores autocorrelation
  double kinetic = 0.0;   ///< T(Psi) of the down species
  double ratio = 0.0;     ///< mean_ir / (kinetic R^2)
};

/// Number of down particles whose nearest down neighbor is closer than 2R.
inline int count_close_pairs(const std::vector<Vec3>& y, double R) {
  int n = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j && norm(y[i] - y[j]) < 2.0 * R) {
        ++n;
        break;
      }
  return n;
}

inline IrDiagnostic ir_diagnostic(const std::vector<Configuration>& samples, double R, const TrialStateSpec& spec) {
  require(samples.size() >= 2, "ir_diagnostic: too few samples");
  require(R > 0.0, "ir_diagnostic: R must be positive");
  TrialWavefunction psi(spec);
  double sum = 0.0, sum2 = 0.0, t = 0.0;
  for (const auto& c : samples) {
    require(std::isfinite(psi.set(c)), "ir_diagnostic: sample is a node of the trial state");
    const double k = count_close_pairs(c.y, R);
    sum += k;
    sum2 += k * k;
    t += psi.kinetic_down();
  }
  const double n = static_cast<double>(samples.size());
  IrDiagnostic d;
  d.R = R;
  d.mean_ir = sum / n;
  d.ir_error = std::sqrt(std::max(0.0, sum2 / n - d.mean_ir * d.mean_ir) / (n - 1.0));
  d.kinetic = t / n;
  d.ratio = d.mean_ir / (d.kinetic * R * R);
  return d;
}

}  // namespace fermigas
