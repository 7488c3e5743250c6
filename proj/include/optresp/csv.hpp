#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace optresp {

/// 17 significant digits, general format. Round-trips every double.
std::string format_real(double value);
double parse_real(const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

/// Writes header and rows, comma separated, '\n' line endings.
void emit_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace optresp
