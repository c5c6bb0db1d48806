#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fesrl {

/// Locale-independent decimal text with 9 significant digits.
std::string format_number(double value);

/// Writes rows of already formatted cells. Throws IoError.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

/// Reads a simple comma-separated file without quoting. Throws IoError.
CsvTable read_csv(const std::filesystem::path& path);

double parse_number(const std::string& cell);

}  // namespace fesrl
