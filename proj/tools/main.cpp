#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <iostream>
#include <sstream>

#include "cli/commands.hpp"

namespace {

using namespace fermigas::cli;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({{0, "cannot read config file " + path.string()}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dilute Fermi gas ground-state energy toolkit (units hbar = 2m = 1)", "fermigas"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out = ".";
  app.add_option("--seed", seed, "Master seed; replaces the seeds in the config");
  app.add_option("--threads", threads, "Worker threads (default: FERMIGAS_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory for JSON and CSV files");

  std::map<std::string, std::string> config_paths;
  Overrides energy_overrides;
  std::string rho, q, a_v, potential;
  std::vector<std::string> split;
  bool bose = false, lhy = false;

  const std::map<std::string, std::string> about{
      {"scatter", "Scattering length and zero-energy profile of a potential"},
      {"energy", "Energy density of the dilute gas (flags may replace the config)"},
      {"dyson-check", "Radial and generalized Dyson gap certification"},
      {"slater-check", "Slater oracle suite and key-estimate scan"},
      {"vmc", "Variational Monte Carlo energy of the Jastrow-Slater trial state"}};
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->fallthrough();
    auto* opt = sub->add_option("config", config_paths[name], "YAML configuration file");
    if (name != "energy") {
      opt->required();
      continue;
    }
    sub->add_option("--rho", rho, "Total density");
    sub->add_option("--q", q, "Number of spin states");
    sub->add_option("--a-v", a_v, "Scattering length");
    sub->add_option("--potential", potential, "Potential file; a_v is computed from it");
    sub->add_option("--split", split, "Species densities rho_up rho_down")->expected(2);
    sub->add_flag("--bose", bose, "Bosonic energy instead of the Fermi expansion");
    sub->add_flag("--lhy", lhy, "Include the Lee-Huang-Yang term (bosons only)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigFailure;
  }

  const std::string subcommand = app.get_subcommands().front()->get_name();
  const std::string path = config_paths[subcommand];
  RunConfig config;
  config.subcommand = subcommand;
  config.seed = seed;
  config.threads = resolve_threads(threads);
  config.out = out;

  Overrides overrides;
  if (subcommand == "energy") {
    if (!rho.empty()) overrides.emplace_back("rho", rho);
    if (!q.empty()) overrides.emplace_back("q", q);
    if (!a_v.empty()) overrides.emplace_back("a_v", a_v);
    if (!potential.empty())
      overrides.emplace_back("potential_file", std::filesystem::absolute(potential).string());
    if (split.size() == 2) {
      overrides.emplace_back("rho_up", split[0]);
      overrides.emplace_back("rho_down", split[1]);
    }
    if (bose) overrides.emplace_back("bose", "true");
    if (lhy) overrides.emplace_back("lhy", "true");
  }

  const std::string source = path.empty() ? "<command line>" : path;
  try {
    const std::string text = path.empty() ? std::string("{}") : read_file(path);
    const auto base = path.empty() ? std::filesystem::current_path() : std::filesystem::path(path).parent_path();
    config.parameters = parse_config(subcommand, text, base, &config.echo, overrides);
  } catch (const ConfigError& e) {
    std::cerr << e.report(source);
    return kConfigFailure;
  }

  try {
    return fermigas::cli::run(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kComputationFailure;
  }
}
