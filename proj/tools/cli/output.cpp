#include "cli/output.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fermigas::cli {

json units_block() {
  return {{"convention", "hbar = 2m = 1"},
          {"length", "input length unit"},
          {"energy", "hbar^2 / (2m length^2)"},
          {"density", "length^-3"},
          {"energy_density", "energy length^-3"}};
}

json summary_header(const RunConfig& run) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["subcommand"] = run.subcommand;
  j["units"] = units_block();
  j["config"] = run.echo;
  if (run.seed) j["seed"] = *run.seed;
  j["status"] = "ok";
  j["warnings"] = json::array();
  return j;
}

std::vector<std::string> check_summary_schema(const json& s) {
  std::vector<std::string> problems;
  auto need = [&](const char* key, bool ok) {
    if (!ok) problems.push_back(std::string("field '") + key + "' missing or of the wrong type");
  };
  need("schema_version", s.contains("schema_version") && s["schema_version"].is_number_integer());
  if (s.contains("schema_version") && s["schema_version"].is_number_integer() && s["schema_version"] != kSchemaVersion)
    problems.push_back("unsupported schema_version");
  need("subcommand", s.contains("subcommand") && s["subcommand"].is_string());
  need("units", s.contains("units") && s["units"].is_object() && s["units"].contains("convention"));
  need("config", s.contains("config") && s["config"].is_object());
  need("status", s.contains("status") && s["status"].is_string());
  need("warnings", s.contains("warnings") && s["warnings"].is_array());
  if (s.contains("status") && s["status"] == "ok") need("result", s.contains("result") && s["result"].is_object());
  if (s.contains("status") && s["status"] == "error") need("error", s.contains("error") && s["error"].is_string());
  return problems;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw std::logic_error("CsvTable: row width does not match the header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace fermigas::cli
