#include "report.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "axcv/error.hpp"
#include "config.hpp"

namespace axcv::cli {

namespace {

std::string cell_text(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  return v.dump();
}

}  // namespace

void Report::add_row(std::vector<nlohmann::json> row) {
  if (row.size() != columns.size()) throw std::logic_error("report row has wrong number of cells");
  rows.push_back(std::move(row));
}

std::string Report::to_csv() const {
  std::ostringstream os;
  os << "# schema_version: " << kReportSchemaVersion << '\n';
  os << "# command: " << command << '\n';
  os << "# config: " << config.dump() << '\n';
  os << "# rng: " << config.value("rng", "") << '\n';
  os << "# seed: " << config.value("seed", 0ULL) << '\n';
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << cell_text(row[c]);
    os << '\n';
  }
  return os.str();
}

std::string Report::to_json() const {
  nlohmann::json j{{"schema_version", kReportSchemaVersion}, {"command", command}, {"config", config}};
  j["rng"] = config.value("rng", "");
  j["seed"] = config.value("seed", 0ULL);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  auto rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) obj[columns[c]] = row[c];
    rows_json.push_back(std::move(obj));
  }
  j["rows"] = std::move(rows_json);
  return j.dump(2) + "\n";
}

std::string Report::render(const std::string& format) const { return format == "json" ? to_json() : to_csv(); }

void write_output(const std::string& path, const std::string& text, std::ostream& console) {
  if (path == "-") {
    console << text << std::flush;
    return;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  os.close();
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace axcv::cli
