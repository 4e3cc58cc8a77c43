#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace fermigas::cli {

inline constexpr int kSchemaVersion = 1;

/// Units block shared by every summary: hbar = 2m = 1, lengths in the input's unit.
json units_block();

/// Summary skeleton: schema version, subcommand, units, echoed config and seed.
json summary_header(const RunConfig& run);

/// Problems with a parsed summary against the schema it was written from; empty if valid.
std::vector<std::string> check_summary_schema(const json& summary);

/// Numbers are written with 17 significant digits so outputs are exact and reproducible.
std::string format_number(double x);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(std::vector<std::string> cells);
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& j);

}  // namespace fermigas::cli
