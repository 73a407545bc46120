#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "app.hpp"
#include "config.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = AXCV_FIXTURE_DIR;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "axcv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = axcv::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("axcv_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Rows of a report as column -> cell maps; '#' header lines are skipped.
std::vector<std::map<std::string, std::string>> csv_rows(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (char c : l) {
      if (c == '"') {
        quoted = !quoted;
      } else if (c == ',' && !quoted) {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cells.push_back(cur);
    return cells;
  };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

double num(const std::map<std::string, std::string>& row, const std::string& col) { return std::stod(row.at(col)); }

}  // namespace

TEST(Cli, DefaultStatsGridCoversEveryRowAndDistribution) {
  const CliRun r = run_cli({"stats", "--samples", "2000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 22u);
  EXPECT_EQ(rows.front().at("kind"), "perforated");
  EXPECT_EQ(rows.back().at("kind"), "truncated");
  EXPECT_EQ(rows.back().at("m"), "7");
  EXPECT_NE(r.out.find("# schema_version: 1"), std::string::npos);
  EXPECT_NE(r.out.find("# rng: mt19937_64"), std::string::npos);
  EXPECT_NE(r.out.find("# seed: 1"), std::string::npos);
}

TEST(Cli, SameSeedGivesByteIdenticalReport) {
  TempDir dir;
  const std::vector<std::string> base{"stats", "--kind", "truncated,recursive", "--m", "4", "--samples", "50000"};
  auto a = base, b = base, c = base;
  a.insert(a.end(), {"--out", dir.file("a.csv")});
  b.insert(b.end(), {"--out", dir.file("b.csv"), "--threads", "3"});
  c.insert(c.end(), {"--out", dir.file("c.csv"), "--seed", "2"});
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  ASSERT_EQ(run_cli(c).code, 0);
  // Thread count is echoed in the header but does not change any row.
  const auto ra = csv_rows(slurp(dir.file("a.csv"))), rb = csv_rows(slurp(dir.file("b.csv")));
  EXPECT_EQ(ra, rb);
  ASSERT_EQ(run_cli(a).code, 0);
  const std::string first = slurp(dir.file("a.csv"));
  ASSERT_EQ(run_cli(a).code, 0);
  EXPECT_EQ(slurp(dir.file("a.csv")), first);
  EXPECT_NE(csv_rows(slurp(dir.file("c.csv"))), ra);
}

TEST(Cli, ConfigErrorsWriteNothing) {
  TempDir dir;
  const std::string out = dir.file("never.csv");
  EXPECT_EQ(run_cli({"stats", "--kind", "booth", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--kind", "perforated", "--m", "8", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--m", "2", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--kind", "", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--format", "xml", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--dist", "poisson", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"infer", "--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"--out", out}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"systolic-check", "--plus-latency", "3", "--out", out}).code, axcv::cli::kExitConfig);
  spit(dir.file("empty.json"), R"({"kind": []})");
  const CliRun r = run_cli({"stats", "--config", dir.file("empty.json"), "--out", out});
  EXPECT_EQ(r.code, axcv::cli::kExitConfig);
  EXPECT_NE(r.err.find("empty multiplier grid"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, ConfigFilePrecedence) {
  TempDir dir;
  spit(dir.file("cfg.json"), R"({"kind": ["recursive"], "m": [2, 3], "samples": 300, "dist": "uniform", "seed": 9})");
  CliRun r = run_cli({"stats", "--config", dir.file("cfg.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("n"), "300");
  EXPECT_EQ(rows[0].at("seed"), "9");
  EXPECT_EQ(rows[1].at("m"), "3");

  r = run_cli({"stats", "--config", dir.file("cfg.json"), "--samples", "400", "--m", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].at("n"), "400");
  EXPECT_EQ(rows[0].at("m"), "5");
  EXPECT_EQ(rows[0].at("seed"), "9");

  spit(dir.file("extra.json"), R"({"samples": 10, "bogus": true})");
  EXPECT_EQ(run_cli({"stats", "--config", dir.file("extra.json")}).code, axcv::cli::kExitConfig);
  spit(dir.file("broken.json"), "{ not json");
  EXPECT_EQ(run_cli({"stats", "--config", dir.file("broken.json")}).code, axcv::cli::kExitConfig);
  EXPECT_EQ(run_cli({"stats", "--config", dir.file("missing.json")}).code, axcv::cli::kExitIo);
}

TEST(Cli, EmbeddedConfigReproducesReport) {
  const CliRun first = run_cli({"stats", "--kind", "perforated", "--m", "2", "--samples", "1000", "--seed", "5"});
  ASSERT_EQ(first.code, 0);
  const std::string marker = "# config: ";
  const auto pos = first.out.find(marker);
  ASSERT_NE(pos, std::string::npos);
  const auto cfg = nlohmann::json::parse(first.out.substr(pos + marker.size(), first.out.find('\n', pos) - pos - marker.size()));
  std::vector<std::string> args{"stats", "--seed", std::to_string(cfg["seed"].get<std::uint64_t>()), "--samples",
                                std::to_string(cfg["samples"].get<std::uint64_t>())};
  for (const auto& g : cfg["grid"]) {
    args.insert(args.end(), {"--kind", g["kind"].get<std::string>(), "--m", std::to_string(g["m"].get<unsigned>())});
  }
  EXPECT_EQ(run_cli(args).out, first.out);
}

TEST(Cli, IoErrors) {
  EXPECT_EQ(run_cli({"infer", "--model", "/nonexistent/model.axm", "--dataset", (kFixtures / "digits_test.img").string()}).code,
            axcv::cli::kExitIo);
  EXPECT_EQ(run_cli({"stats", "--samples", "10", "--kind", "exact", "--out", "/nonexistent/dir/report.csv"}).code,
            axcv::cli::kExitIo);
}

TEST(Cli, ConvErrorIdentities) {
  CliRun r = run_cli({"conv-error", "--kind", "perforated", "--m", "3", "--filter-size", "1", "--filters", "3",
                   "--samples", "500"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& row : csv_rows(r.out)) {
    EXPECT_EQ(num(row, "mean_with_v"), 0.0);
    EXPECT_EQ(num(row, "var_with_v"), 0.0);
    EXPECT_EQ(num(row, "var_rounded"), 0.0);
    EXPECT_GT(num(row, "var_without_v"), 0.0);
  }
  r = run_cli({"conv-error", "--kind", "exact", "--filter-size", "9,64", "--filters", "2", "--samples", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) {
    for (const char* col : {"mean_without_v", "var_without_v", "mean_with_v", "var_with_v", "mean_rounded", "var_rounded"})
      EXPECT_EQ(num(row, col), 0.0) << col;
  }
}

TEST(Cli, ConvErrorClosedFormAgreesWithMonteCarlo) {
  const CliRun r = run_cli({"conv-error", "--kind", "perforated,recursive", "--m", "2", "--filter-size", "64",
                         "--filters", "5", "--samples", "20000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 10u);
  for (const auto& row : rows) {
    const double diff = std::abs(num(row, "var_with_v") - num(row, "var_closed_form"));
    EXPECT_LE(diff, 5 * num(row, "var_stderr_with_v")) << row.at("kind") << " filter " << row.at("filter");
    EXPECT_LT(num(row, "var_with_v"), num(row, "var_without_v"));
  }
}

TEST(Cli, SystolicCheckPassesAndDetectsFaults) {
  CliRun r = run_cli({"systolic-check", "--array-size", "1,4,16", "--samples", "20", "--random-shapes"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 33u);
  for (const auto& row : rows) EXPECT_EQ(row.at("status"), "pass");

  r = run_cli({"systolic-check", "--kind", "recursive", "--m", "3", "--array-size", "8", "--samples", "5",
               "--inject-fault", "--seed", "77"});
  EXPECT_EQ(r.code, axcv::cli::kExitEquivalence);
  rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].at("status"), "fail");
  EXPECT_EQ(rows[0].at("mismatches"), "1");
  EXPECT_EQ(rows[0].at("first_mismatch_tile"), "0");
  EXPECT_NE(r.err.find("seed=77 tile=0"), std::string::npos);
}

TEST(Cli, InferReport) {
  const std::string model = (kFixtures / "digits_cnn.axm").string(), data = (kFixtures / "digits_test.img").string();
  CliRun r = run_cli({"infer", "--model", model, "--dataset", data, "--kind", "perforated", "--m", "1,2,3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["seed"], 1);
  EXPECT_EQ(j["model"]["format_version"], 1);
  EXPECT_EQ(j["dataset"]["format_version"], 1);
  EXPECT_EQ(j["dataset"]["images"], 1000);
  EXPECT_EQ(j["config"]["model"], model);
  ASSERT_EQ(j["rows"].size(), 3u);
  for (const auto& row : j["rows"]) {
    EXPECT_LE(row["loss_with_v"].get<double>(), row["loss_without_v"].get<double>()) << row["m"];
  }
  ASSERT_EQ(j["results"][0]["layers"].size(), 4u);

  r = run_cli({"infer", "--model", model, "--dataset", data, "--kind", "exact", "--samples", "300"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto e = nlohmann::json::parse(r.out);
  EXPECT_EQ(e["dataset"]["images"], 300);
  EXPECT_EQ(e["rows"][0]["accuracy_with_v"], e["exact_accuracy"]);
  EXPECT_EQ(e["rows"][0]["accuracy_without_v"], e["exact_accuracy"]);

  r = run_cli({"infer", "--model", model, "--dataset", data, "--kind", "exact", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].at("accuracy_with_v"), nlohmann::json(*j["model"]["recorded_accuracy"].get_ptr<const double*>()).dump());
}

TEST(Cli, SweepCoversEveryLevel) {
  const CliRun r = run_cli({"sweep", "--dist", "uniform"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 8u + 8u + 15u);
  for (const auto& row : rows) {
    if (row.at("m") == "0") {
      EXPECT_EQ(num(row, "exhaustive_mean"), 0.0);
      EXPECT_EQ(num(row, "max_error"), 0.0);
    }
  }
  // Perforated mean error under uniform operands: 127.5 * (2^m - 1) / 2.
  EXPECT_DOUBLE_EQ(num(rows[2], "exhaustive_mean"), 127.5 * 3 / 2);
}

TEST(Cli, HelpExitsZero) {
  const CliRun r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("systolic-check"), std::string::npos);
}
