#pragma once

// Experiment harness: JSON configs in, one RunRecord per (method, sweep
// point, seed) out, written as CSV with an optional JSON history sidecar.

#include "seqpar/elk.hpp"
#include "seqpar/fixedpoint.hpp"
#include "seqpar/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace seqpar {

/// Parses none | scale:<k> | clip | clip:<lo>:<hi>.
[[nodiscard]] Damping parse_damping(const std::string& text);
/// Parses zeros | random | jacobi.
[[nodiscard]] InitStrategy parse_init(const std::string& text, std::uint64_t seed = 0);
[[nodiscard]] ElkMode parse_elk_mode(const std::string& text);
[[nodiscard]] ElkJacobian parse_elk_jacobian(const std::string& text);

struct MethodSpec {
  enum class Kind { FixedPoint, Elk };

  Kind kind = Kind::FixedPoint;
  SolverMethod method;
  Damping damping;
  double lambda = 1.0;
  ElkMode elk_mode = ElkMode::Filter;
  ElkJacobian elk_jacobian = ElkJacobian::Full;

  /// Column value in reports, e.g. "quasi" or "elk-filter-full".
  [[nodiscard]] std::string label() const;
};

struct SweepSpec {
  std::vector<std::size_t> T;
  std::vector<std::size_t> D;        // empty: the model's own dimension
  std::vector<double> gain;          // mean_field_rnn only
  std::vector<double> lambda;        // ELK methods only
  std::vector<std::uint64_t> seeds;  // model seed and random-init seed
};

struct ExperimentConfig {
  static constexpr int kSchema = 1;

  std::string name;
  ModelSpec model;
  std::vector<MethodSpec> methods;
  SweepSpec sweep;
  double tolerance = 1e-4;
  std::optional<std::size_t> max_iters;
  InitStrategy::Kind init = InitStrategy::Kind::JacobiStep;
  bool diagnostics = true;
  bool history = false;
  std::string output;
  std::optional<std::size_t> workers;

  /// Throws ContractViolation on unknown keys, a wrong schema version or
  /// values that are invalid for the model.
  [[nodiscard]] static ExperimentConfig from_json(const nlohmann::json& doc);
  [[nodiscard]] static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
};

struct RunRecord {
  std::string experiment;
  std::string model;
  std::string method;
  std::string damping;
  std::size_t T = 0;
  std::size_t D = 0;
  std::optional<double> gain;
  std::optional<double> lambda;
  std::uint64_t seed = 0;

  bool converged = false;
  std::size_t iterations = 0;
  std::size_t sweeps = 0;
  std::size_t resets = 0;
  double error = 0.0;  // max |s - s*| against the sequential rollout
  double final_merit = 0.0;
  double elapsed = 0.0;

  std::optional<double> lle;
  std::optional<double> gamma;
  std::optional<double> mismatch;
  std::optional<double> pl_lower;
  std::optional<double> pl_upper;

  /// Empty on success, otherwise "<kind>: <message>".
  std::string error_tag;
  std::vector<IterationRecord> history;
};

/// Runs every sweep point and seed on a bounded pool. Failures inside a run
/// become rows with converged = false and an error tag. Rows come back in
/// sweep order regardless of scheduling.
[[nodiscard]] std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, WorkerPool* pool = nullptr);
/// Number of rows run_experiment will produce.
[[nodiscard]] std::size_t planned_rows(const ExperimentConfig& cfg);

[[nodiscard]] std::vector<std::string> csv_header();
/// RFC 4180: comma separated, CRLF line ends, fields quoted when needed.
void write_csv(std::ostream& out, const std::vector<RunRecord>& rows);
[[nodiscard]] std::string csv_escape(const std::string& field);
[[nodiscard]] nlohmann::json history_json(const std::string& experiment, const std::vector<RunRecord>& rows);
[[nodiscard]] nlohmann::json to_json(const RunRecord& row);

/// Writes through a temporary file and renames, so readers never see a
/// partial report.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

struct OracleCheck {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
  [[nodiscard]] bool pass() const { return deviation <= tolerance; }
};

/// ELK smoother step against the dense damped normal equations on a
/// perturbed mean-field rollout.
[[nodiscard]] OracleCheck oracle_lm_smoother(std::size_t T, std::size_t D, double lambda, std::uint64_t seed);
/// Parallel scan against a left fold of random affine maps.
[[nodiscard]] OracleCheck oracle_scan_fold(std::size_t T, std::size_t D, std::uint64_t seed, WorkerPool* pool);
/// Blocks of the inverse of the assembled residual Jacobian against Jacobian
/// chain products.
[[nodiscard]] OracleCheck oracle_jinv(std::size_t T, std::size_t D, std::uint64_t seed);

}  // namespace seqpar
