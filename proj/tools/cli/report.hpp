#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace axcv::cli {

/// A flat table plus the header block that makes it reproducible. Cells are
/// JSON scalars so numbers print with shortest round-trip precision in both
/// output formats.
struct Report {
  std::string command;
  nlohmann::json config;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
  nlohmann::json extra = nlohmann::json::object();  // JSON-only nested sections

  void add_row(std::vector<nlohmann::json> row);
  std::string to_csv() const;
  std::string to_json() const;
  std::string render(const std::string& format) const;
};

/// Writes to a file, or to `console` when path is "-". Throws IoError.
void write_output(const std::string& path, const std::string& text, std::ostream& console);

}  // namespace axcv::cli
