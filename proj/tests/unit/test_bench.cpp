#include <doctest.h>

#include "seqpar/bench.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace seqpar;
using nlohmann::json;

namespace {

json small_config() {
  return json::parse(R"({
    "schema": 1,
    "name": "small",
    "model": {"kind": "gru", "dim": 3},
    "methods": ["newton", {"method": "quasi"}, {"method": "jacobi", "damping": "scale:0.2"},
                {"method": "elk", "lambda": 0.01}],
    "sweep": {"T": [16, 40], "seeds": [0, 1]},
    "tolerance": 1e-8,
    "init": "random"
  })");
}

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF records.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      rows.back().push_back(field);
      field.clear();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      rows.back().push_back(field);
      field.clear();
      rows.emplace_back();
      ++i;
    } else {
      field += c;
    }
  }
  if (rows.back().empty()) rows.pop_back();
  return rows;
}

std::string csv_of(const std::vector<RunRecord>& rows) {
  std::ostringstream out;
  write_csv(out, rows);
  return out.str();
}

std::size_t column(const std::string& name) {
  const auto h = csv_header();
  return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
}

}  // namespace

TEST_CASE("config parses and expands into one row per method, point and seed") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(small_config());
  CHECK(cfg.name == "small");
  CHECK(cfg.methods.size() == 4);
  CHECK(cfg.methods[2].damping.kind == Damping::Kind::Scale);
  CHECK(cfg.methods[3].kind == MethodSpec::Kind::Elk);
  CHECK(cfg.methods[3].label() == "elk-filter-full");
  WorkerPool pool(2);
  const auto rows = run_experiment(cfg, &pool);
  REQUIRE(rows.size() == 4 * 2 * 2);
  CHECK(planned_rows(cfg) == rows.size());
  for (const RunRecord& r : rows) {
    CAPTURE(r.method);
    CHECK(r.error_tag.empty());
    CHECK(r.converged);
    CHECK(r.error <= 1e-6);
    CHECK(r.lle.has_value());
    CHECK(r.mismatch.has_value());
    CHECK(r.D == 3);
  }
  CHECK(rows[0].method == "newton");
  CHECK(rows[0].T == 16);
  CHECK(rows[0].seed == 0);
  CHECK(rows[0].iterations <= rows[1].iterations);
}

TEST_CASE("two runs of a config give the same report") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(small_config());
  WorkerPool one(1);
  WorkerPool three(3);
  const auto a = parse_csv(csv_of(run_experiment(cfg, &one)));
  const auto b = parse_csv(csv_of(run_experiment(cfg, &three)));
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 17);
  CHECK(a[0] == csv_header());
  for (std::size_t i = 1; i < a.size(); ++i) {
    REQUIRE(a[i].size() == csv_header().size());
    for (const char* col : {"experiment", "method", "T", "seed", "converged", "iterations", "sweeps", "resets"})
      CHECK(a[i][column(col)] == b[i][column(col)]);
    for (const char* col : {"error", "final_merit", "lle", "gamma", "mismatch", "pl_lower", "pl_upper"}) {
      const std::string& x = a[i][column(col)];
      const std::string& y = b[i][column(col)];
      if (x.empty() || y.empty()) {
        CHECK(x == y);
        continue;
      }
      CHECK(std::abs(std::stod(x) - std::stod(y)) <= 1e-9);
    }
  }
}

TEST_CASE("a diverging run still yields a well-formed row") {
  json doc = json::parse(R"({
    "schema": 1, "name": "blowup",
    "model": {"kind": "scalar_affine", "alpha": 3.0},
    "methods": ["picard", "jacobi", "newton"],
    "sweep": {"T": [400], "seeds": [0]},
    "tolerance": 1e-12, "max_iters": 5, "init": "zeros"
  })");
  const auto rows = run_experiment(ExperimentConfig::from_json(doc));
  REQUIRE(rows.size() == 3);
  CHECK_FALSE(rows[0].converged);
  CHECK_FALSE(rows[1].converged);
  const auto parsed = parse_csv(csv_of(rows));
  REQUIRE(parsed.size() == 4);
  for (const auto& r : parsed) CHECK(r.size() == csv_header().size());
}

TEST_CASE("a throwing run becomes a tagged row and the sweep continues") {
  json doc = json::parse(R"({
    "schema": 1, "name": "nan",
    "model": {"kind": "logistic", "r": 4.0, "s0": 0.3},
    "methods": [{"method": "elk", "lambda": 1e-300}, "newton"],
    "sweep": {"T": [64], "seeds": [0]},
    "tolerance": 1e-10, "init": "random"
  })");
  const auto rows = run_experiment(ExperimentConfig::from_json(doc));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].error_tag.rfind("numerical: ", 0) == 0);
  CHECK_FALSE(rows[0].converged);
  CHECK(std::isinf(rows[0].error));
  CHECK(rows[1].method == "newton");
  CHECK(rows[1].error_tag.empty());
  CHECK(rows[1].converged);
  const auto parsed = parse_csv(csv_of(rows));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[1][column("error")] == "inf");
}

TEST_CASE("ELK lambda sweeps multiply only the ELK rows") {
  json doc = small_config();
  doc["sweep"]["lambda"] = {0.01, 0.1, 1.0};
  doc["sweep"]["T"] = {20};
  doc["sweep"]["seeds"] = {3};
  const auto rows = run_experiment(ExperimentConfig::from_json(doc));
  REQUIRE(rows.size() == 3 + 3);
  CHECK(planned_rows(ExperimentConfig::from_json(doc)) == 6);
  CHECK_FALSE(rows[0].lambda.has_value());
  CHECK(rows[3].lambda == 0.01);
  CHECK(rows[5].lambda == 1.0);
}

TEST_CASE("gain and dimension sweeps for the mean-field network") {
  json doc = json::parse(R"({
    "schema": 1, "name": "thresh",
    "model": {"kind": "mean_field_rnn"},
    "methods": ["newton"],
    "sweep": {"T": [32], "D": [4, 8], "gain": [0.5, 1.5], "seeds": [0]},
    "tolerance": 1e-10, "diagnostics": false, "history": true
  })");
  const auto rows = run_experiment(ExperimentConfig::from_json(doc));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].D == 4);
  CHECK(rows[0].gain == 0.5);
  CHECK(rows[3].D == 8);
  CHECK(rows[3].gain == 1.5);
  CHECK_FALSE(rows[0].lle.has_value());
  CHECK(rows[0].history.size() == rows[0].sweeps);

  const json side = history_json("thresh", rows);
  CHECK(side["schema"] == 1);
  CHECK(side["runs"].size() == 4);
  CHECK(side["runs"][0]["merit"].size() == rows[0].sweeps);
}

TEST_CASE("config validation") {
  auto rejects = [](const std::function<void(json&)>& edit) {
    json doc = small_config();
    edit(doc);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(doc), ContractViolation);
  };
  rejects([](json& d) { d["schema"] = 2; });
  rejects([](json& d) { d.erase("schema"); });
  rejects([](json& d) { d["methods"] = json::array(); });
  rejects([](json& d) { d["bogus"] = 1; });
  rejects([](json& d) { d["model"]["colour"] = "red"; });
  rejects([](json& d) { d["model"]["kind"] = "pendulum"; });
  rejects([](json& d) { d["methods"] = {{{"method", "newton"}, {"damping", "clip"}}}; });
  rejects([](json& d) { d["methods"] = {{{"method", "quasi"}, {"damping", "scale:2"}}}; });
  rejects([](json& d) { d["methods"] = {{{"method", "elk"}, {"lambda", -1.0}}}; });
  rejects([](json& d) { d["sweep"]["gain"] = {1.0}; });
  rejects([](json& d) { d["sweep"]["T"] = json::array(); });
  rejects([](json& d) { d["sweep"]["T"] = {0}; });
  rejects([](json& d) { d["sweep"]["D"] = {0}; });
  rejects([](json& d) { d["tolerance"] = 0.0; });
  rejects([](json& d) { d["tolerance"] = "small"; });
  rejects([](json& d) {
    d["methods"] = {"newton"};
    d["sweep"]["lambda"] = {1.0};
  });
  rejects([](json& d) {
    d["model"] = {{"kind", "s5"}};
    d["sweep"]["D"] = {4};
  });
  rejects([](json& d) {
    d["model"] = {{"kind", "mean_field_rnn"}};
    d["sweep"]["gain"] = {-1.0};
  });
}

TEST_CASE("damping and init parsing") {
  CHECK(parse_damping("none").kind == Damping::Kind::None);
  CHECK(parse_damping("scale:0.25").k == 0.25);
  const Damping c = parse_damping("clip:-0.5:0.5");
  CHECK(c.kind == Damping::Kind::Clip);
  CHECK(c.lo == -0.5);
  CHECK(c.hi == 0.5);
  CHECK_THROWS_AS((void)parse_damping("scale"), ContractViolation);
  CHECK_THROWS_AS((void)parse_damping("scale:x"), ContractViolation);
  CHECK(parse_init("random", 7).seed == 7);
  CHECK(parse_init("zeros").kind == InitStrategy::Kind::Zeros);
  CHECK_THROWS_AS((void)parse_init("ones"), ContractViolation);
}

TEST_CASE("csv quoting follows RFC 4180") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_escape("two\nlines") == "\"two\nlines\"");

  RunRecord r;
  r.experiment = "name, with \"quotes\"";
  r.error_tag = "numerical: bad\r\nthing";
  const auto parsed = parse_csv(csv_of({r, r}));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[1][column("experiment")] == r.experiment);
  CHECK(parsed[2][column("error_tag")] == r.error_tag);
  CHECK(parsed[1][column("gain")].empty());
}

TEST_CASE("atomic file writes leave no temporary behind") {
  const auto dir = std::filesystem::temp_directory_path() / "seqpar_bench_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "nested" / "out.csv";
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "second");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(path.parent_path())) files += e.is_regular_file() ? 1 : 0;
  CHECK(files == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config files load from disk") {
  const auto path = std::filesystem::temp_directory_path() / "seqpar_cfg_test.json";
  {
    std::ofstream out(path);
    out << small_config().dump(2);
  }
  CHECK(ExperimentConfig::load(path).name == "small");
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS((void)ExperimentConfig::load(path), ContractViolation);
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)ExperimentConfig::load(path), ContractViolation);
}

TEST_CASE("dense oracles agree") {
  WorkerPool pool(2);
  const OracleCheck lm = oracle_lm_smoother(16, 3, 0.5, 0);
  CHECK(lm.pass());
  CHECK(lm.deviation <= 1e-8);
  CHECK(oracle_scan_fold(100, 4, 1, &pool).pass());
  CHECK(oracle_jinv(8, 3, 2).pass());
}
