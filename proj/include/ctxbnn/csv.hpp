#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ctxbnn::csv {

/// 17 significant digits, enough for any double to survive a text round trip.
std::string format_real(double v);

double parse_real(std::string_view text, const std::string& source, std::size_t line);
long long parse_int(std::string_view text, const std::string& source, std::size_t line);
unsigned long long parse_uint(std::string_view text, const std::string& source, std::size_t line);

std::vector<std::string_view> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

/// Header + string cells, as written by the experiment tools.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

void write_table(const Table& table, const std::filesystem::path& path);
Table read_table(const std::filesystem::path& path);
Table read_table(std::istream& in, const std::string& source);

/// Truncates and writes; creates parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ctxbnn::csv
