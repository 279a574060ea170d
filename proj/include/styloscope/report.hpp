#pragma once

#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace styloscope {

/// RFC-4180 table: CRLF record separators, fields quoted when they contain
/// a comma, quote, CR or LF.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(std::vector<std::string> fields);
  std::string str() const;
  void write(const std::filesystem::path& path) const;

  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string csv_escape(std::string_view field);

/// Parses RFC-4180 text into records (used by tests and the report bundler).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Shortest decimal that round-trips the double.
std::string format_number(double v);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

struct SvgPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

/// Standalone SVG scatter plot with one labelled marker per point. `comment`
/// is embedded verbatim inside <metadata>.
std::string scatter_svg(std::span<const SvgPoint> points, std::string_view title,
                        std::string_view comment);

}  // namespace styloscope
