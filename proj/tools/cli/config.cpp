#include "cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fermigas::cli {

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(issues.empty() ? "invalid configuration" : issues.front().message), issues_(std::move(issues)) {}

std::string ConfigError::report(const std::string& source) const {
  std::ostringstream os;
  for (const auto& i : issues_) {
    os << source;
    if (i.line > 0) os << ":" << i.line;
    os << ": " << i.message << "\n";
  }
  return os.str();
}

namespace {

int line_of(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  return m.is_null() ? 0 : m.line + 1;
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else return "a list of numbers";
}

/// Typed access to one YAML map. Every key read is marked as known; whatever is left
/// over when finish() runs is reported as an unknown key.
class Fields {
 public:
  Fields(YAML::Node node, std::string context, std::vector<ConfigIssue>& issues, json& echo)
      : node_(std::move(node)), context_(std::move(context)), issues_(issues), echo_(echo) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) add(node_, "expected a mapping of key: value pairs");
  }

  bool has(const std::string& key) const { return node_.IsMap() && static_cast<bool>(cnode()[key]); }
  int line(const std::string& key) const {
    if (overridden_.count(key)) return 0;
    return has(key) ? line_of(cnode()[key]) : line_of(node_);
  }
  /// Keys set from the command line carry no line number.
  void set_overridden(std::set<std::string> keys) { overridden_ = std::move(keys); }
  YAML::Node child(const std::string& key) {
    used_.insert(key);
    return has(key) ? YAML::Node(cnode()[key]) : YAML::Node();
  }

  template <class T>
  std::optional<T> take(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    const YAML::Node v = cnode()[key];
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (v.IsScalar() && !v.Scalar().empty() && v.Scalar().front() == '-') throw YAML::Exception(v.Mark(), "");
      }
      T x = v.as<T>();
      if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(x)) throw YAML::Exception(v.Mark(), "");
      }
      echo_[key] = x;
      return x;
    } catch (const YAML::Exception&) {
      issues_.push_back({line(key), name(key) + ": expected " + type_name<T>()});
      return std::nullopt;
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    auto v = take<T>(key);
    if (!has(key)) echo_[key] = fallback;
    return v.value_or(fallback);
  }

  template <class T>
  std::optional<T> required(const std::string& key) {
    if (!has(key)) {
      used_.insert(key);
      issues_.push_back({line_of(node_), name(key) + ": required key missing"});
      return std::nullopt;
    }
    return take<T>(key);
  }

  /// Records a domain violation at the key's line; the message names the invariant.
  void check(bool ok, const std::string& key, const std::string& invariant) {
    if (!ok) issues_.push_back({line(key), name(key) + ": must satisfy " + invariant});
  }
  void fail(const std::string& key, const std::string& message) { issues_.push_back({line(key), message}); }

  void finish() {
    if (!node_.IsMap()) return;
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const std::string key = it->first.as<std::string>();
      if (!used_.count(key)) add(it->first, "unknown key '" + context_ + key + "'");
    }
  }

  std::string name(const std::string& key) const { return context_ + key; }
  const std::string& context() const { return context_; }

 private:
  const YAML::Node& cnode() const { return node_; }
  void add(const YAML::Node& at, std::string message) { issues_.push_back({line_of(at), std::move(message)}); }

  YAML::Node node_;
  std::string context_;
  std::vector<ConfigIssue>& issues_;
  json& echo_;
  std::set<std::string> used_;
  std::set<std::string> overridden_;
};

YAML::Node load_yaml(const std::string& text, const std::string& what) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError({{e.mark.line + 1, what + "syntax error: " + e.msg}});
  }
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : base / p;
}

/// (r, v) rows from a two-column text file; '#' starts a comment, commas or blanks separate.
bool read_table_file(const std::filesystem::path& p, std::vector<double>& r, std::vector<double>& v,
                     std::string& error) {
  std::ifstream in(p);
  if (!in) {
    error = "cannot read table file " + p.string();
    return false;
  }
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = line.substr(0, line.find('#'));
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream is(line);
    double a, b;
    if (!(is >> a)) continue;
    if (!(is >> b)) {
      error = p.string() + ":" + std::to_string(n) + ": expected two columns r v";
      return false;
    }
    r.push_back(a);
    v.push_back(b);
  }
  return true;
}

const std::set<std::string> kPotentialKeys{"kind",   "hard_core_radius", "radius", "range",     "height",
                                           "inner",  "outer",            "table",  "table_file"};

/// Reads potential keys from f. Missing kind with a table means samples.
std::optional<PotentialConfig> read_potential(Fields& f, const std::filesystem::path& base,
                                              std::vector<ConfigIssue>& issues, json& echo) {
  const std::size_t before = issues.size();
  std::string kind = f.get<std::string>("kind", (f.has("table") || f.has("table_file")) ? "samples" : "");
  const double core = f.take<double>("hard_core_radius").value_or(0.0);
  f.check(core >= 0.0, "hard_core_radius", "hard_core_radius >= 0");
  const auto range = f.take<double>("range");
  const auto height = f.take<double>("height");
  const auto inner = f.take<double>("inner");
  const auto outer = f.take<double>("outer");
  const auto radius = f.take<double>("radius");
  YAML::Node table = f.child("table");
  const auto table_file = f.take<std::string>("table_file");
  if (height) f.check(*height >= 0.0, "height", "height >= 0");

  RadialPotential v;
  auto build = [&](auto&& make) {
    if (issues.size() != before) return;
    try {
      v = make();
    } catch (const PreconditionError& e) {
      f.fail("kind", f.name("kind") + ": " + e.what());
    }
  };
  if (kind.empty()) {
    f.fail("kind", f.name("kind") + ": required key missing (zero|hard_core|square|shell|samples)");
  } else if (kind == "zero") {
    // nothing to read
  } else if (kind == "hard_core") {
    const double a = radius.value_or(core);
    f.check(a > 0.0, radius ? "radius" : "hard_core_radius", "hard-core radius > 0");
    build([&] { return RadialPotential::hard_core(a); });
  } else if (kind == "square") {
    if (!height) f.fail("height", f.name("height") + ": required for kind square");
    if (!range) f.fail("range", f.name("range") + ": required for kind square");
    if (range) f.check(*range > core, "range", "range > hard_core_radius");
    build([&] { return RadialPotential::square(*height, *range, core); });
  } else if (kind == "shell") {
    const auto o = outer ? outer : range;
    if (!height) f.fail("height", f.name("height") + ": required for kind shell");
    if (!inner) f.fail("inner", f.name("inner") + ": required for kind shell");
    if (!o) f.fail("outer", f.name("outer") + ": required for kind shell");
    if (inner && o) f.check(*inner >= core && *o > *inner, "inner", "hard_core_radius <= inner < outer");
    build([&] {
      auto p = RadialPotential::shell(*height, *inner, *o, core);
      return range && *range > *o ? p.with_range(*range) : p;
    });
  } else if (kind == "samples") {
    std::vector<double> r, vv;
    if (f.has("table") && table.IsSequence()) {
      for (const auto& row : table) {
        try {
          const auto pair = row.as<std::vector<double>>();
          if (pair.size() != 2) throw YAML::Exception(row.Mark(), "");
          r.push_back(pair[0]);
          vv.push_back(pair[1]);
        } catch (const YAML::Exception&) {
          issues.push_back({line_of(row), f.name("table") + ": each row must be [r, v]"});
        }
      }
      echo["table"] = json::array();
      for (std::size_t i = 0; i < r.size(); ++i) echo["table"].push_back({r[i], vv[i]});
    } else if (f.has("table")) {
      f.fail("table", f.name("table") + ": expected a list of [r, v] rows");
    } else if (table_file) {
      std::string error;
      if (!read_table_file(resolve(base, *table_file), r, vv, error)) f.fail("table_file", error);
    } else {
      f.fail("kind", f.name("kind") + ": samples needs a table or table_file");
    }
    build([&] {
      auto p = RadialPotential::sampled(r, vv, core);
      return range && *range > p.range() ? p.with_range(*range) : p;
    });
  } else {
    f.fail("kind", f.name("kind") + ": unknown potential kind '" + kind + "' (zero|hard_core|square|shell|samples)");
  }
  if (issues.size() != before) return std::nullopt;
  return PotentialConfig{v, echo};
}

/// Potential from either an inline `potential` map or a `potential_file`.
std::optional<PotentialConfig> potential_section(Fields& f, const std::filesystem::path& base,
                                                 std::vector<ConfigIssue>& issues, json& echo, bool required) {
  const bool inline_map = f.has("potential");
  const auto file = f.take<std::string>("potential_file");
  if (inline_map && file) {
    f.fail("potential_file", "give either potential or potential_file, not both");
    f.child("potential");
    return std::nullopt;
  }
  if (inline_map) {
    json& e = echo["potential"] = json::object();
    Fields p(f.child("potential"), f.context() + "potential.", issues, e);
    auto out = read_potential(p, base, issues, e);
    p.finish();
    return out;
  }
  if (file) {
    const auto path = resolve(base, *file);
    std::string text;
    try {
      text = read_file(path);
    } catch (const std::exception& e) {
      f.fail("potential_file", e.what());
      return std::nullopt;
    }
    try {
      auto pc = parse_potential_text(text, path.parent_path());
      echo["potential"] = pc.echo;
      return pc;
    } catch (const ConfigError& e) {
      for (const auto& i : e.issues())
        issues.push_back({f.line("potential_file"),
                          *file + (i.line > 0 ? ":" + std::to_string(i.line) : "") + ": " + i.message});
      return std::nullopt;
    }
  }
  if (required) f.fail("potential", "required key missing: potential or potential_file");
  return std::nullopt;
}

ScatterConfig parse_scatter(Fields& f, const std::filesystem::path& base, std::vector<ConfigIssue>& issues,
                            json& echo) {
  ScatterConfig c;
  bool top_level = false;
  for (const auto& k : kPotentialKeys) top_level = top_level || f.has(k);
  std::optional<PotentialConfig> p;
  if (top_level) {
    json e = json::object();
    p = read_potential(f, base, issues, e);
    for (const auto& k : kPotentialKeys)
      if (echo.contains(k)) {
        e[k] = echo[k];
        echo.erase(k);
      }
    echo["potential"] = e;
    if (p) p->echo = e;
  } else {
    p = potential_section(f, base, issues, echo, true);
  }
  if (p) c.potential = *p;
  c.r_max = f.get<double>("r_max", 0.0);
  f.check(c.r_max >= 0.0, "r_max", "r_max >= 0 (0 selects the default)");
  c.grid_points = f.get<std::size_t>("grid_points", c.grid_points);
  f.check(c.grid_points >= 100, "grid_points", "grid_points >= 100");
  c.profile_points = f.get<std::size_t>("profile_points", c.profile_points);
  f.check(c.profile_points >= 2, "profile_points", "profile_points >= 2");
  if (p && c.r_max > 0.0) f.check(c.r_max > p->potential.range(), "r_max", "r_max > range R0");
  return c;
}

EnergyConfig parse_energy(Fields& f, const std::filesystem::path& base, std::vector<ConfigIssue>& issues,
                          json& echo) {
  EnergyConfig c;
  c.rho = f.take<double>("rho");
  c.q = f.get<int>("q", 2);
  c.a_v = f.take<double>("a_v");
  c.potential = potential_section(f, base, issues, echo, false);
  c.rho_up = f.take<double>("rho_up");
  c.rho_down = f.take<double>("rho_down");
  c.bose = f.get<bool>("bose", false);
  c.lhy = f.get<bool>("lhy", false);
  if (!c.rho && !f.has("rho")) f.fail("rho", "rho: required (config key or --rho)");
  if (c.rho) f.check(*c.rho > 0.0, "rho", "rho > 0");
  f.check(c.q >= 1, "q", "q >= 1");
  if (c.a_v && (f.has("potential") || f.has("potential_file")))
    f.fail("a_v", "give either a_v or a potential, not both");
  if (!f.has("a_v") && !f.has("potential") && !f.has("potential_file"))
    f.fail("a_v", "a_v: required (or a potential)");
  if (c.a_v) f.check(*c.a_v >= 0.0, "a_v", "a_v >= 0");
  if (c.rho_up.has_value() != c.rho_down.has_value()) f.fail("rho_up", "rho_up and rho_down must be given together");
  if (c.rho_up && c.rho_down && c.rho) {
    f.check(*c.rho_up >= 0.0, "rho_up", "rho_up >= 0");
    f.check(*c.rho_down >= 0.0, "rho_down", "rho_down >= 0");
    f.check(std::abs(*c.rho_up + *c.rho_down - *c.rho) <= 1e-12 * *c.rho, "rho_up", "rho_up + rho_down = rho");
    f.check(c.q == 2, "q", "q = 2 with a species split");
  }
  if (c.lhy) f.check(c.bose, "lhy", "lhy only with bose");
  if (c.bose) f.check(!c.rho_up, "rho_up", "no species split with bose");
  return c;
}

DysonConfig parse_dyson(Fields& f, const std::filesystem::path& base, std::vector<ConfigIssue>& issues, json& echo) {
  DysonConfig c;
  if (auto p = potential_section(f, base, issues, echo, true)) c.potential = *p;
  const double R0 = c.potential.potential.range();
  {
    json& e = echo["shell"] = json::object();
    Fields s(f.child("shell"), "shell.", issues, e);
    c.shell_inner = s.get<double>("R0", R0);
    c.shell_outer = s.get<double>("R", 5.0 * c.shell_inner);
    s.check(c.shell_inner >= R0, "R0", "shell R0 >= range of the potential");
    s.check(c.shell_outer > c.shell_inner, "R", "R > R0");
    s.finish();
  }
  {
    json& e = echo["radial"] = json::object();
    Fields r(f.child("radial"), "radial.", issues, e);
    c.l_max = r.get<int>("l_max", c.l_max);
    c.radial_elements = r.get<std::size_t>("elements", c.radial_elements);
    c.radial_tolerance = r.get<double>("tolerance", c.radial_tolerance);
    r.check(c.l_max >= 0, "l_max", "l_max >= 0");
    r.check(c.radial_elements >= 16, "elements", "elements >= 16");
    r.check(c.radial_tolerance > 0.0, "tolerance", "tolerance > 0");
    r.finish();
  }
  {
    json& e = echo["generalized"] = json::object();
    Fields g(f.child("generalized"), "generalized.", issues, e);
    c.generalized = g.get<bool>("enabled", c.generalized);
    c.cutoff = g.get<std::string>("cutoff", c.cutoff);
    c.k_c = g.get<double>("k_c", 2.0 / std::max(c.shell_outer, 1e-300));
    c.eps = g.get<std::vector<double>>("eps", c.eps);
    c.M = g.get<int>("M", c.M);
    c.L = g.get<double>("L", 4.0 * c.shell_outer);
    c.tolerance = g.get<double>("tolerance", c.tolerance);
    c.barrier_factor = g.get<double>("barrier_factor", c.barrier_factor);
    g.check(c.cutoff == "gaussian" || c.cutoff == "full" || c.cutoff == "none", "cutoff", "cutoff in {gaussian, full, none}");
    g.check(c.k_c > 0.0, "k_c", "k_c > 0");
    g.check(!c.eps.empty(), "eps", "at least one eps");
    for (double e2 : c.eps) g.check(e2 > 0.0 && e2 < 1.0, "eps", "0 < eps < 1");
    g.check(c.M >= 8 && c.M % 2 == 0, "M", "M even and >= 8");
    g.check(c.L > 2.0 * c.shell_outer, "L", "L > 2R");
    g.check(c.tolerance > 0.0, "tolerance", "tolerance > 0");
    g.check(c.barrier_factor > 0.0, "barrier_factor", "barrier_factor > 0");
    g.finish();
  }
  c.seed = f.get<std::uint64_t>("seed", c.seed);
  return c;
}

SlaterConfig parse_slater(Fields& f, std::vector<ConfigIssue>& issues, json& echo) {
  SlaterConfig c;
  {
    json& e = echo["oracle"] = json::object();
    Fields o(f.child("oracle"), "oracle.", issues, e);
    c.oracle_max_n = o.get<int>("max_n", c.oracle_max_n);
    c.oracle_max_m = o.get<int>("max_m", c.oracle_max_m);
    c.oracle_seed = o.get<std::uint64_t>("seed", c.oracle_seed);
    o.check(c.oracle_max_n >= 1 && c.oracle_max_n <= 4, "max_n", "1 <= max_n <= 4");
    o.check(c.oracle_max_m >= 1 && c.oracle_max_m <= 2, "max_m", "1 <= max_m <= 2");
    o.finish();
  }
  {
    json& e = echo["key_estimate"] = json::object();
    Fields k(f.child("key_estimate"), "key_estimate.", issues, e);
    c.N = k.get<int>("N", c.N);
    c.centers = k.get<int>("centers", c.centers);
    c.L = k.get<double>("L", c.L);
    c.s = k.get<double>("s", c.s);
    c.ratios = k.get<std::vector<double>>("ratios", c.ratios);
    c.draws = k.get<int>("draws", c.draws);
    c.seed = k.get<std::uint64_t>("seed", c.seed);
    k.check(c.N >= 1, "N", "N >= 1");
    k.check(c.centers >= 1, "centers", "centers >= 1");
    k.check(c.L > 0.0, "L", "L > 0");
    k.check(c.s > 0.0 && c.s < c.L, "s", "0 < s < L");
    k.check(!c.ratios.empty(), "ratios", "at least one ratio");
    for (double r : c.ratios) k.check(r > 2.0, "ratios", "s / a_v > 2 (cores inside the balls)");
    k.check(c.draws >= 1, "draws", "draws >= 1");
    k.finish();
  }
  return c;
}

VmcConfig parse_vmc(Fields& f, const std::filesystem::path& base, std::vector<ConfigIssue>& issues, json& echo) {
  VmcConfig c;
  c.n_up = f.required<int>("N_up").value_or(0);
  c.n_down = f.required<int>("N_down").value_or(0);
  f.check(c.n_up >= 0, "N_up", "N_up >= 0");
  f.check(c.n_down >= 0, "N_down", "N_down >= 0");
  f.check(c.n_up + c.n_down >= 1, "N_up", "N_up + N_down >= 1");
  const auto L = f.take<double>("L");
  const auto rho = f.take<double>("rho");
  if (L && rho) f.fail("L", "give either L or rho, not both");
  if (!L && !rho) f.fail("L", "L or rho: required");
  if (L) f.check(*L > 0.0, "L", "L > 0");
  if (rho) f.check(*rho > 0.0, "rho", "rho > 0");
  if (L && *L > 0.0) c.L = *L;
  if (rho && *rho > 0.0 && c.n_up + c.n_down >= 1) c.L = std::cbrt((c.n_up + c.n_down) / *rho);
  echo["L"] = c.L;
  const auto p = potential_section(f, base, issues, echo, true);
  if (p) c.potential = *p;
  c.b = f.get<double>("b", 0.0);
  c.s = f.get<double>("s", 0.0);
  f.check(c.b >= 0.0, "b", "b >= 0 (0 selects the default)");
  f.check(c.s >= 0.0, "s", "s >= 0 (0 selects the default)");
  c.steps = f.get<std::size_t>("steps", c.steps);
  c.equilibration = f.get<std::size_t>("equilibration", c.equilibration);
  c.step_size = f.get<double>("step_size", 0.0);
  c.seeds = f.get<std::vector<std::uint64_t>>("seeds", c.seeds);
  f.check(c.steps >= 20, "steps", "steps >= 20 (blocking needs 20 blocks)");
  f.check(c.equilibration >= 1000, "equilibration", "equilibration >= 1000 sweeps");
  f.check(c.step_size >= 0.0, "step_size", "step_size >= 0 (0 selects the default)");
  f.check(!c.seeds.empty(), "seeds", "at least one seed");
  if (p && c.L > 0.0 && c.n_up + c.n_down >= 1 && !p->potential.vanishes()) {
    const double R0 = p->potential.range();
    const double spacing = std::cbrt(c.L * c.L * c.L / (c.n_up + c.n_down));
    const double b = c.b > 0.0 ? c.b : std::min(0.4 * spacing, c.L / 8.0);
    const double s = c.s > 0.0 ? c.s : std::min(0.25 * spacing, b);
    f.check(s > R0, "s", "the Jastrow invariant R0 < s (R0 = " + std::to_string(R0) + ", s = " + std::to_string(s) + ")");
    f.check(s <= b, "s", "the Jastrow invariant s <= b");
    f.check(b < 0.5 * c.L, "b", "b < L/2");
  }
  return c;
}

}  // namespace

PotentialConfig parse_potential_text(const std::string& text, const std::filesystem::path& base_dir) {
  const YAML::Node root = load_yaml(text, "");
  std::vector<ConfigIssue> issues;
  json echo = json::object();
  Fields f(root, "", issues, echo);
  auto p = read_potential(f, base_dir, issues, echo);
  f.finish();
  if (!issues.empty() || !p) throw ConfigError(issues);
  return *p;
}

SubcommandConfig parse_config(const std::string& subcommand, const std::string& text,
                              const std::filesystem::path& base_dir, json* echo_out, const Overrides& overrides) {
  YAML::Node root = load_yaml(text, "");
  if (!overrides.empty() && (!root || root.IsNull())) root = YAML::Node(YAML::NodeType::Map);
  if (!overrides.empty() && !root.IsMap()) throw ConfigError({{1, "expected a mapping of key: value pairs"}});
  for (const auto& [key, value] : overrides) root[key] = YAML::Load(value);
  std::vector<ConfigIssue> issues;
  json echo = json::object();
  Fields f(root, "", issues, echo);
  std::set<std::string> keys;
  for (const auto& kv : overrides) keys.insert(kv.first);
  f.set_overridden(std::move(keys));
  SubcommandConfig out;
  if (subcommand == "scatter") out = parse_scatter(f, base_dir, issues, echo);
  else if (subcommand == "energy") out = parse_energy(f, base_dir, issues, echo);
  else if (subcommand == "dyson-check") out = parse_dyson(f, base_dir, issues, echo);
  else if (subcommand == "slater-check") out = parse_slater(f, issues, echo);
  else if (subcommand == "vmc") out = parse_vmc(f, base_dir, issues, echo);
  else issues.push_back({0, "unknown subcommand '" + subcommand + "'"});
  f.finish();
  if (!issues.empty()) {
    std::stable_sort(issues.begin(), issues.end(), [](const auto& a, const auto& b) { return a.line < b.line; });
    throw ConfigError(issues);
  }
  if (echo_out) *echo_out = echo;
  return out;
}

}  // namespace fermigas::cli
