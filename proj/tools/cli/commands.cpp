#include "cli/commands.hpp"

#include <cstdlib>
#include <exception>
#include <ostream>
#include <thread>

#include "cli/output.hpp"
#include "fermigas/dyson.hpp"
#include "fermigas/expansion.hpp"
#include "fermigas/slater.hpp"
#include "fermigas/vmc.hpp"
#include "oracles.hpp"

namespace fermigas::cli {

namespace {

using fmt = std::string (*)(double);
const fmt num = format_number;

json warnings_json(const std::vector<std::string>& w) {
  json a = json::array();
  for (const auto& s : w) a.push_back(s);
  return a;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers; results must be stored by index.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json run_scatter(const ScatterConfig& c, const RunConfig& run, std::ostream& log) {
  const RadialPotential& v = c.potential.potential;
  const auto sol = solve_zero_energy(v, c.r_max, c.grid_points);
  json r;
  r["a_v"] = sol.a_v;
  r["kind"] = v.kind();
  r["range"] = sol.R0;
  r["hard_core_radius"] = sol.hard_core;
  if (!v.has_hard_core()) r["born_a_v"] = born_scattering_length(v);
  const auto id = check_energy_identity(v, sol);
  r["residuals"] = {{"energy_identity", id.residual},
                    {"energy_identity_relative", id.target > 0.0 ? id.residual / id.target : id.residual},
                    {"asymptotic_fit", sol.fit_residual}};
  r["grid"] = {{"points", sol.grid.size()}, {"r_max", sol.r_max}, {"fit_points", sol.fit_points}};

  CsvTable profile({"r", "phi", "dphi_dr"});
  const double r_end = std::max(2.0 * std::max(sol.R0, sol.a_v), 1e-12);
  for (std::size_t i = 1; i <= c.profile_points; ++i) {
    const double x = r_end * static_cast<double>(i) / static_cast<double>(c.profile_points);
    const auto p = sol.phi(x);
    profile.add_row({num(x), num(p.value), num(p.d1)});
  }
  write_text(run.out / "scatter_profile.csv", profile.str());
  log << "a_v = " << num(sol.a_v) << "  (kind " << v.kind() << ", R0 = " << num(sol.R0) << ")\n"
      << "energy identity residual = " << num(id.residual) << "\n";
  return r;
}

json run_energy(const EnergyConfig& c, const RunConfig& run, std::ostream& log) {
  double a = c.a_v.value_or(0.0);
  std::string source = "given";
  if (c.potential) {
    a = c.potential->potential.vanishes() ? 0.0 : solve_zero_energy(c.potential->potential).a_v;
    source = "potential";
  }
  EnergyBreakdown e;
  json r;
  if (c.bose) {
    e = bose_energy_density(*c.rho, a, c.lhy);
    r["statistics"] = "bose";
  } else {
    GasParameters p;
    p.rho = *c.rho;
    p.q = c.q;
    p.a_v = a;
    p.rho_up = c.rho_up;
    p.rho_down = c.rho_down;
    e = fermi_energy_density(p);
    r["statistics"] = "fermi";
  }
  r["rho"] = *c.rho;
  r["q"] = c.q;
  if (c.rho_up) r["rho_up"] = *c.rho_up, r["rho_down"] = *c.rho_down;
  r["a_v"] = a;
  r["a_v_source"] = source;
  r["free_term"] = e.free_term;
  r["interaction_term"] = e.interaction_term;
  r["lhy_term"] = e.lhy_term;
  r["total"] = e.total;
  r["diluteness"] = e.diluteness;
  r["diluteness_warning"] = e.diluteness_warning;

  CsvTable t({"statistics", "rho", "q", "a_v", "free_term", "interaction_term", "lhy_term", "total", "diluteness"});
  t.add_row({c.bose ? "bose" : "fermi", num(*c.rho), std::to_string(c.q), num(a), num(e.free_term),
             num(e.interaction_term), num(e.lhy_term), num(e.total), num(e.diluteness)});
  write_text(run.out / "energy.csv", t.str());
  log << "energy density = " << num(e.total) << "  (free " << num(e.free_term) << ", interaction "
      << num(e.interaction_term) << ", lhy " << num(e.lhy_term) << ")\n";
  if (e.diluteness_warning) log << "warning: rho a^3 = " << num(e.diluteness) << " is not dilute\n";
  return r;
}

json run_dyson(const DysonConfig& c, const RunConfig& run, std::ostream& log) {
  const RadialPotential& v = c.potential.potential;
  const auto U = make_soft_shell(c.shell_inner, c.shell_outer);
  RadialGapOptions ro;
  ro.elements = c.radial_elements;
  ro.tolerance = c.radial_tolerance;
  const auto radial = dyson_gap_radial(v, U, c.shell_outer, c.l_max, ro);

  CsvTable table({"test", "parameter", "minimum", "tolerance", "certified"});
  json r;
  r["a_v"] = radial.a_v;
  json rj;
  rj["minimum"] = radial.minimum;
  rj["tolerance"] = radial.tolerance;
  rj["energy_scale"] = radial.energy_scale;
  rj["elements"] = radial.elements;
  rj["certified"] = radial.certified;
  rj["channel_minima"] = radial.channel_minima;
  r["radial"] = rj;
  for (std::size_t l = 0; l < radial.channel_minima.size(); ++l)
    table.add_row({"radial", "l=" + std::to_string(l), num(radial.channel_minima[l]), num(radial.tolerance),
                   radial.channel_minima[l] >= -radial.tolerance ? "true" : "false"});
  bool all = radial.certified;
  log << "radial Dyson gap: min " << num(radial.minimum) << " vs -" << num(radial.tolerance)
      << (radial.certified ? "  certified\n" : "  NOT certified\n");

  json gen = json::array();
  if (c.generalized) {
    MomentumCutoff chi = c.cutoff == "full" ? MomentumCutoff::full()
                         : c.cutoff == "none" ? MomentumCutoff::none()
                                              : MomentumCutoff::gaussian(c.k_c);
    BoxGrid grid;
    grid.L = c.L;
    grid.M = c.M;
    GeneralizedGapOptions go;
    go.tolerance = c.tolerance;
    go.barrier_factor = c.barrier_factor;
    go.seed = run.seed.value_or(c.seed);
    std::vector<GeneralizedGapReport> reports(c.eps.size());
    parallel_for(c.eps.size(), run.threads, [&](std::size_t i) {
      reports[i] = generalized_dyson_gap(v, U, chi, c.eps[i], c.shell_outer, grid, go);
    });
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& g = reports[i];
      gen.push_back({{"eps", c.eps[i]},
                     {"minimum", g.minimum},
                     {"tolerance", g.tolerance},
                     {"residual", g.residual},
                     {"certified", g.certified},
                     {"converged", g.converged},
                     {"dimension", g.dimension},
                     {"a_v", g.a_v},
                     {"barrier_height", g.barrier_height},
                     {"integral_w", g.integral_w},
                     {"warnings", warnings_json(g.warnings)}});
      table.add_row({"generalized", "eps=" + num(c.eps[i]), num(g.minimum), num(g.tolerance),
                     g.certified ? "true" : "false"});
      all = all && g.certified;
      log << "generalized gap eps=" << num(c.eps[i]) << ": min " << num(g.minimum) << " vs -" << num(g.tolerance)
          << (g.certified ? "  certified\n" : "  NOT certified\n");
    }
  }
  r["generalized"] = gen;
  r["certified"] = all;
  write_text(run.out / "dyson_gaps.csv", table.str());
  return r;
}

json run_slater(const SlaterConfig& c, const RunConfig& run, std::ostream& log) {
  json r;
  json checks = json::array();
  bool pass = true;
  for (int n = 1; n <= c.oracle_max_n; ++n) {
    const auto s = oracle::random_orbitals(n, c.oracle_seed + n, n == 4 ? 2 : 3);
    const auto M = overlap_matrix(s);
    const double fast = slater_norm(M), slow = oracle::brute_force_norm(s);
    const double rel = std::abs(fast - slow) / slow;
    const bool ok = rel < 1e-10;
    checks.push_back({{"check", "norm"}, {"n", n}, {"m", 0}, {"relative_error", rel}, {"pass", ok}});
    pass = pass && ok;
    const CorrelationKernel K(s, M);
    Rng rng(derive_seed(c.oracle_seed, n));
    for (int m = 1; m <= std::min(c.oracle_max_m, n); ++m) {
      std::vector<Vec3> pts;
      for (int i = 0; i < m; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      const double d_fast = m_particle_density(K, pts), d_slow = oracle::brute_force_density(s, pts);
      const double err = std::abs(d_fast - d_slow) / std::max(1.0, d_slow);
      const bool dok = err < 1e-8;
      checks.push_back({{"check", "density"}, {"n", n}, {"m", m}, {"relative_error", err}, {"pass", dok}});
      pass = pass && dok;
    }
  }
  r["oracles"] = checks;
  r["oracles_pass"] = pass;

  KeyScanConfig k;
  k.N = c.N;
  k.centers = c.centers;
  k.L = c.L;
  k.s = c.s;
  k.ratios = c.ratios;
  k.draws = c.draws;
  k.seed = run.seed.value_or(c.seed);
  const auto rows = key_estimate_scan(k);
  CsvTable table({"draw", "s_over_a", "a_v", "norm_I_minus_M"});
  bool decreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    table.add_row({std::to_string(rows[i].draw), num(rows[i].ratio), num(rows[i].a_v), num(rows[i].norm)});
    if (i % c.ratios.size() != 0 && rows[i].ratio > rows[i - 1].ratio && !(rows[i].norm < rows[i - 1].norm))
      decreasing = false;
  }
  write_text(run.out / "key_estimate.csv", table.str());
  r["key_estimate_rows"] = rows.size();
  r["key_estimate_decreasing"] = decreasing;
  r["pass"] = pass && decreasing;
  log << "oracle suite: " << (pass ? "pass" : "FAIL") << "\n"
      << "key estimate trend: " << (decreasing ? "decreasing" : "NOT decreasing") << "\n";
  return r;
}

json run_vmc(const VmcConfig& c, const RunConfig& run, std::ostream& log) {
  TrialStateOptions t;
  t.b = c.b;
  t.s = c.s;
  const auto spec = make_trial_state(c.n_up, c.n_down, c.L, c.potential.potential, t);
  VmcOptions o;
  o.sweeps = c.steps;
  o.equilibration_sweeps = c.equilibration;
  o.step = c.step_size;
  o.seeds = c.seeds;
  if (run.seed) o.seeds = {*run.seed};
  o.threads = run.threads;
  const auto res = vmc_upper_bound(spec, o);

  const double a = spec.f.is_identity() ? 0.0 : spec.f.a_v();
  const double V = spec.volume();
  json r;
  r["energy"] = res.energy;
  r["error"] = res.error;
  r["variance"] = res.variance;
  r["acceptance"] = res.acceptance;
  r["samples"] = res.samples;
  r["seeds"] = res.seeds;
  r["E0_finite"] = res.E0_finite;
  r["a_v"] = a;
  r["predicted"] = {{"thermodynamic", V * two_component_energy(spec.n_up / V, spec.n_down / V, a)},
                    {"box", res.E0_finite + 8.0 * std::numbers::pi * a * spec.n_up * spec.n_down / V}};
  r["trial_state"] = {{"N_up", spec.n_up},
                      {"N_down", spec.n_down},
                      {"L", spec.L},
                      {"b", spec.f.is_identity() ? 0.0 : spec.f.cutoff()},
                      {"s", spec.g.is_identity() ? 0.0 : spec.g.outer()},
                      {"R0", spec.potential.range()},
                      {"open_shell", res.open_shell}};
  json chains = json::array();
  CsvTable blocks({"chain", "seed", "block", "block_length", "mean"});
  for (std::size_t i = 0; i < res.chains.size(); ++i) {
    const auto& ch = res.chains[i];
    chains.push_back({{"seed", ch.seed},
                      {"mean", ch.mean},
                      {"error", ch.error},
                      {"acceptance", ch.acceptance},
                      {"step", ch.step},
                      {"block_length", ch.block_length}});
    for (std::size_t b = 0; b < ch.block_means.size(); ++b)
      blocks.add_row({std::to_string(i), std::to_string(ch.seed), std::to_string(b), std::to_string(ch.block_length),
                      num(ch.block_means[b])});
  }
  r["chains"] = chains;
  r["warnings"] = warnings_json(res.warnings);
  write_text(run.out / "vmc_blocks.csv", blocks.str());
  log << "E = " << num(res.energy) << " +- " << num(res.error) << "  (E0_finite " << num(res.E0_finite)
      << ", acceptance " << num(res.acceptance) << ")\n";
  return r;
}

}  // namespace

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("FERMIGAS_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return 1;
}

int run(const RunConfig& config, std::ostream& log) {
  json summary = summary_header(config);
  int code = kSuccess;
  try {
    json result = std::visit(
        [&](const auto& c) -> json {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, ScatterConfig>) return run_scatter(c, config, log);
          else if constexpr (std::is_same_v<T, EnergyConfig>) return run_energy(c, config, log);
          else if constexpr (std::is_same_v<T, DysonConfig>) return run_dyson(c, config, log);
          else if constexpr (std::is_same_v<T, SlaterConfig>) return run_slater(c, config, log);
          else return run_vmc(c, config, log);
        },
        config.parameters);
    if (result.contains("warnings")) {
      summary["warnings"] = result["warnings"];
      result.erase("warnings");
    }
    summary["result"] = result;
  } catch (const std::exception& e) {
    summary["status"] = "error";
    summary["error"] = e.what();
    log << "error: " << e.what() << "\n";
    code = kComputationFailure;
  }
  write_json(config.out / (config.subcommand + ".json"), summary);
  return code;
}

}  // namespace fermigas::cli
