#include "seqpar/bench.hpp"

#include "seqpar/diagnostics.hpp"
#include "seqpar/pscan.hpp"
#include "seqpar/rng.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <sstream>
#include <unistd.h>

namespace seqpar {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& message) {
  if (!ok) throw ContractViolation(message);
}

std::string number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ContractViolation("cannot parse " + what + " from '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), where + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    require(known, "unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractViolation("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = get<T>(obj, key, where);
}

template <class T>
void read_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = get<T>(obj, key, where);
}

ModelSpec model_from_json(const json& m) {
  const std::string where = "model";
  check_keys(m, {"kind", "dim", "seed", "alpha", "s0", "inputs", "gain", "forcing", "dt", "eps", "r"}, where);
  require(m.contains("kind"), "model.kind is required");
  ModelSpec spec;
  spec.kind = ModelSpec::parse_kind(get<std::string>(m, "kind", where));
  read_opt(m, "dim", spec.dim, where);
  read_opt(m, "seed", spec.seed, where);
  read_opt(m, "alpha", spec.alpha, where);
  read_opt(m, "s0", spec.s0, where);
  read_opt(m, "gain", spec.gain, where);
  read_opt(m, "forcing", spec.forcing, where);
  read_opt(m, "dt", spec.dt, where);
  read_opt(m, "eps", spec.eps, where);
  read_opt(m, "r", spec.r, where);
  if (m.contains("inputs") && !m.at("inputs").is_null()) {
    const auto rows = get<std::vector<std::vector<double>>>(m, "inputs", where);
    require(!rows.empty() && !rows.front().empty(), "model.inputs must be a nonempty T x D array");
    RowMatrix u(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].size() == rows.front().size(), "model.inputs rows must have equal length");
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    spec.inputs = u;
  }
  return spec;
}

MethodSpec method_from_json(const json& m) {
  const std::string where = "methods[]";
  if (m.is_string()) {
    MethodSpec spec;
    const std::string text = m.get<std::string>();
    if (text == "elk") {
      spec.kind = MethodSpec::Kind::Elk;
    } else {
      spec.method = SolverMethod::parse(text);
    }
    return spec;
  }
  check_keys(m, {"method", "damping", "lambda", "mode", "jacobian"}, where);
  require(m.contains("method"), "methods[].method is required");
  MethodSpec spec;
  const std::string name = get<std::string>(m, "method", where);
  if (name == "elk") {
    spec.kind = MethodSpec::Kind::Elk;
    require(!m.contains("damping"), "ELK methods take no damping");
    read_opt(m, "lambda", spec.lambda, where);
    if (m.contains("mode")) spec.elk_mode = parse_elk_mode(get<std::string>(m, "mode", where));
    if (m.contains("jacobian")) spec.elk_jacobian = parse_elk_jacobian(get<std::string>(m, "jacobian", where));
  } else {
    require(!m.contains("lambda") && !m.contains("mode") && !m.contains("jacobian"),
            "lambda, mode and jacobian apply to ELK methods only");
    spec.method = SolverMethod::parse(name);
    if (m.contains("damping")) spec.damping = parse_damping(get<std::string>(m, "damping", where));
  }
  return spec;
}

std::unique_ptr<DynamicsSystem> build_point(ModelSpec spec, std::size_t T, std::optional<std::size_t> D,
                                            std::optional<double> gain, std::uint64_t seed) {
  if (D) spec.dim = D;
  if (gain) spec.gain = *gain;
  spec.seed = seed;
  return build(spec, T);
}

std::string error_tag(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const NumericalError& x) {
    return std::string("numerical: ") + x.what();
  } catch (const ContractViolation& x) {
    return std::string("contract: ") + x.what();
  } catch (const std::exception& x) {
    return std::string("exception: ") + x.what();
  } catch (...) {
    return "exception: unknown";
  }
}

ElkConfig elk_config(const MethodSpec& m, double lambda, const SolverConfig& solver) {
  ElkConfig cfg;
  cfg.lambda = lambda;
  cfg.mode = m.elk_mode;
  cfg.jacobian = m.elk_jacobian;
  cfg.solver = solver;
  return cfg;
}

struct Job {
  std::size_t T;
  std::optional<std::size_t> D;
  std::optional<double> gain;
  std::uint64_t seed;
};

std::vector<RunRecord> run_job(const ExperimentConfig& cfg, const Job& job) {
  const auto sys = build_point(cfg.model, job.T, job.D, job.gain, job.seed);
  const Trajectory star = rollout_sequential(*sys);

  RunRecord base;
  base.experiment = cfg.name;
  base.model = ModelSpec::kind_name(cfg.model.kind);
  base.T = job.T;
  base.D = sys->dim();
  base.gain = job.gain;
  base.seed = job.seed;
  if (cfg.diagnostics) {
    try {
      base.lle = estimate_lle(*sys, star, 3, job.seed).lambda;
      const PlBounds pl = pl_bounds(*base.lle, 1.0, 1.0, job.T, sys->dim());
      base.pl_lower = pl.lower;
      base.pl_upper = pl.upper;
    } catch (const NumericalError&) {
      base.lle = std::numeric_limits<double>::quiet_NaN();
    }
  }

  SolverConfig solver;
  solver.tol = cfg.tolerance;
  solver.max_iters = cfg.max_iters;
  solver.init = InitStrategy{cfg.init, job.seed};
  solver.record_history = true;

  std::vector<RunRecord> rows;
  for (const MethodSpec& m : cfg.methods) {
    std::vector<std::optional<double>> lambdas{std::nullopt};
    if (m.kind == MethodSpec::Kind::Elk) {
      lambdas.clear();
      if (cfg.sweep.lambda.empty()) lambdas.emplace_back(m.lambda);
      for (double l : cfg.sweep.lambda) lambdas.emplace_back(l);
    }
    for (const auto& lambda : lambdas) {
      RunRecord row = base;
      row.method = m.label();
      row.damping = m.kind == MethodSpec::Kind::Elk ? "none" : m.damping.name();
      row.lambda = lambda;
      try {
        SolveReport report;
        if (m.kind == MethodSpec::Kind::Elk) {
          report = elk_solve(*sys, elk_config(m, *lambda, solver));
        } else {
          SolverConfig c = solver;
          c.damping = m.damping;
          report = fixed_point_solve(*sys, c, m.method);
        }
        row.converged = report.converged;
        row.iterations = report.iterations;
        row.sweeps = report.sweeps;
        row.resets = report.resets;
        row.elapsed = report.elapsed;
        row.error = max_abs_diff(report.trajectory, star);
        if (!std::isfinite(row.error)) row.error = std::numeric_limits<double>::infinity();
        row.final_merit = merit(*sys, report.trajectory);
        if (cfg.history) row.history = std::move(report.history);
      } catch (...) {
        row.converged = false;
        row.error = std::numeric_limits<double>::infinity();
        row.final_merit = std::numeric_limits<double>::infinity();
        row.error_tag = error_tag(std::current_exception());
      }
      if (cfg.diagnostics) {
        const SolverMethod surrogate = m.kind == MethodSpec::Kind::Elk
                                           ? (m.elk_jacobian == ElkJacobian::Full ? SolverMethod::newton()
                                                                                  : SolverMethod::quasi_diagonal())
                                           : m.method;
        // A diagnostic that cannot be computed leaves its column empty.
        try {
          row.mismatch = jacobian_mismatch(*sys, star, surrogate);
          if (m.kind == MethodSpec::Kind::FixedPoint) row.gamma = asymptotic_rate(*sys, star, surrogate);
        } catch (const NumericalError&) {
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string opt_number(const std::optional<double>& x) { return x ? number(*x) : std::string(); }

}  // namespace

Damping parse_damping(const std::string& text) {
  if (text == "none") return Damping::none();
  if (text == "clip") return Damping::clip();
  const auto parts = split(text, ':');
  if (parts.size() == 2 && parts[0] == "scale") {
    const Damping d = Damping::scale(parse_double(parts[1], "damping scale"));
    d.validate();
    return d;
  }
  if (parts.size() == 3 && parts[0] == "clip") {
    const Damping d = Damping::clip(parse_double(parts[1], "clip bound"), parse_double(parts[2], "clip bound"));
    d.validate();
    return d;
  }
  throw ContractViolation("unknown damping '" + text + "' (none | scale:<k> | clip | clip:<lo>:<hi>)");
}

InitStrategy parse_init(const std::string& text, std::uint64_t seed) {
  if (text == "zeros") return InitStrategy::zeros();
  if (text == "random" || text == "random_normal") return InitStrategy::random_normal(seed);
  if (text == "jacobi" || text == "jacobi_step") return InitStrategy::jacobi_step();
  throw ContractViolation("unknown init '" + text + "' (zeros | random | jacobi)");
}

ElkMode parse_elk_mode(const std::string& text) {
  if (text == "filter") return ElkMode::Filter;
  if (text == "smoother") return ElkMode::Smoother;
  throw ContractViolation("unknown ELK mode '" + text + "' (filter | smoother)");
}

ElkJacobian parse_elk_jacobian(const std::string& text) {
  if (text == "full") return ElkJacobian::Full;
  if (text == "diagonal" || text == "diag") return ElkJacobian::Diagonal;
  throw ContractViolation("unknown ELK Jacobian '" + text + "' (full | diagonal)");
}

std::string MethodSpec::label() const {
  if (kind == Kind::Elk) {
    return std::string("elk-") + (elk_mode == ElkMode::Filter ? "filter" : "smoother") + "-" +
           (elk_jacobian == ElkJacobian::Full ? "full" : "diagonal");
  }
  if (method.kind == SolverMethod::Kind::ScaledIdentity) return "scaled:" + number(method.scale);
  return method.name();
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  const std::string where = "config";
  check_keys(doc, {"schema", "name", "model", "methods", "sweep", "tolerance", "max_iters", "init", "diagnostics",
                   "history", "output", "workers"},
             where);
  require(doc.contains("schema"), "config.schema is required");
  require(get<int>(doc, "schema", where) == kSchema, "unsupported config schema (expected 1)");
  require(doc.contains("model"), "config.model is required");
  require(doc.contains("methods") && doc.at("methods").is_array(), "config.methods must be an array");

  ExperimentConfig cfg;
  read_opt(doc, "name", cfg.name, where);
  cfg.model = model_from_json(doc.at("model"));
  for (const auto& m : doc.at("methods")) cfg.methods.push_back(method_from_json(m));
  read_opt(doc, "tolerance", cfg.tolerance, where);
  read_opt(doc, "max_iters", cfg.max_iters, where);
  if (doc.contains("init")) cfg.init = parse_init(get<std::string>(doc, "init", where)).kind;
  read_opt(doc, "diagnostics", cfg.diagnostics, where);
  read_opt(doc, "history", cfg.history, where);
  read_opt(doc, "output", cfg.output, where);
  read_opt(doc, "workers", cfg.workers, where);

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    check_keys(s, {"T", "D", "gain", "lambda", "seeds"}, "sweep");
    read_opt(s, "T", cfg.sweep.T, "sweep");
    read_opt(s, "D", cfg.sweep.D, "sweep");
    read_opt(s, "gain", cfg.sweep.gain, "sweep");
    read_opt(s, "lambda", cfg.sweep.lambda, "sweep");
    read_opt(s, "seeds", cfg.sweep.seeds, "sweep");
  }
  if (cfg.sweep.seeds.empty()) cfg.sweep.seeds.push_back(cfg.model.seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractViolation("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

void ExperimentConfig::validate() const {
  require(!methods.empty(), "config.methods must be nonempty");
  require(!sweep.T.empty(), "sweep.T must be nonempty");
  require(!sweep.seeds.empty(), "sweep.seeds must be nonempty");
  require(tolerance > 0.0 && std::isfinite(tolerance), "tolerance must be positive");
  require(!max_iters || *max_iters >= 1, "max_iters must be at least 1");
  require(!workers || *workers >= 1, "workers must be at least 1");
  require(sweep.gain.empty() || model.kind == ModelSpec::Kind::MeanFieldRnn,
          "sweep.gain applies to mean_field_rnn only");

  bool has_elk = false;
  for (const MethodSpec& m : methods) {
    if (m.kind == MethodSpec::Kind::Elk) {
      has_elk = true;
      require(m.lambda > 0.0 && std::isfinite(m.lambda), "ELK lambda must be positive");
      continue;
    }
    m.damping.validate();
    require(!(m.method.kind == SolverMethod::Kind::Newton && m.damping.kind == Damping::Kind::Clip),
            "clip damping needs a non-dense surrogate; it cannot be combined with newton");
  }
  require(sweep.lambda.empty() || has_elk, "sweep.lambda needs at least one ELK method");
  for (double l : sweep.lambda) require(l > 0.0 && std::isfinite(l), "sweep.lambda values must be positive");

  for (std::size_t T : sweep.T) require(T >= 1, "sweep.T values must be at least 1");
  std::vector<std::optional<std::size_t>> dims{std::nullopt};
  if (!sweep.D.empty()) dims.assign(sweep.D.begin(), sweep.D.end());
  std::vector<std::optional<double>> gains{std::nullopt};
  if (!sweep.gain.empty()) gains.assign(sweep.gain.begin(), sweep.gain.end());
  for (const auto& D : dims) {
    for (const auto& g : gains) {
      const std::size_t T = model.inputs ? static_cast<std::size_t>(model.inputs->rows()) : 1;
      (void)build_point(model, T, D, g, sweep.seeds.front());
    }
  }
  if (model.inputs)
    for (std::size_t T : sweep.T)
      require(T == static_cast<std::size_t>(model.inputs->rows()), "sweep.T must match the rows of model.inputs");
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, WorkerPool* pool) {
  cfg.validate();
  std::vector<Job> jobs;
  std::vector<std::optional<std::size_t>> dims{std::nullopt};
  if (!cfg.sweep.D.empty()) dims.assign(cfg.sweep.D.begin(), cfg.sweep.D.end());
  std::vector<std::optional<double>> gains{std::nullopt};
  if (!cfg.sweep.gain.empty()) gains.assign(cfg.sweep.gain.begin(), cfg.sweep.gain.end());
  for (std::size_t T : cfg.sweep.T)
    for (const auto& D : dims)
      for (const auto& g : gains)
        for (std::uint64_t seed : cfg.sweep.seeds) jobs.push_back({T, D, g, seed});

  std::unique_ptr<WorkerPool> own;
  if (!pool) {
    own = std::make_unique<WorkerPool>(cfg.workers.value_or(WorkerPool::default_width()));
    pool = own.get();
  }

  std::vector<std::vector<RunRecord>> results(jobs.size());
  std::mutex mutex;
  // Workers pull jobs one at a time from a shared counter.
  std::atomic<std::size_t> next{0};
  pool->parallel_for(0, pool->width(), [&](std::size_t) {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      std::vector<RunRecord> rows;
      try {
        rows = run_job(cfg, jobs[i]);
      } catch (...) {
        RunRecord row;
        row.experiment = cfg.name;
        row.model = ModelSpec::kind_name(cfg.model.kind);
        row.T = jobs[i].T;
        row.D = jobs[i].D.value_or(cfg.model.dim.value_or(0));
        row.gain = jobs[i].gain;
        row.seed = jobs[i].seed;
        row.error = std::numeric_limits<double>::infinity();
        row.final_merit = std::numeric_limits<double>::infinity();
        row.error_tag = error_tag(std::current_exception());
        for (const MethodSpec& m : cfg.methods) {
          row.method = m.label();
          row.damping = m.kind == MethodSpec::Kind::Elk ? "none" : m.damping.name();
          rows.push_back(row);
        }
      }
      const std::lock_guard<std::mutex> lock(mutex);
      results[i] = std::move(rows);
    }
  });

  std::vector<RunRecord> out;
  for (auto& r : results)
    for (auto& row : r) out.push_back(std::move(row));
  return out;
}

std::size_t planned_rows(const ExperimentConfig& cfg) {
  std::size_t per_job = 0;
  for (const MethodSpec& m : cfg.methods)
    per_job += m.kind == MethodSpec::Kind::Elk ? std::max<std::size_t>(1, cfg.sweep.lambda.size()) : 1;
  return cfg.sweep.T.size() * std::max<std::size_t>(1, cfg.sweep.D.size()) *
         std::max<std::size_t>(1, cfg.sweep.gain.size()) * cfg.sweep.seeds.size() * per_job;
}

std::vector<std::string> csv_header() {
  return {"experiment", "model",     "method",    "damping",  "T",        "D",        "gain",
          "lambda",     "seed",      "converged", "iterations", "sweeps", "resets",   "error",
          "final_merit", "elapsed_s", "lle",      "gamma",    "mismatch", "pl_lower", "pl_upper",
          "error_tag"};
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(std::ostream& out, const std::vector<RunRecord>& rows) {
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_escape(fields[i]);
    out << "\r\n";
  };
  line(csv_header());
  for (const RunRecord& r : rows) {
    line({r.experiment, r.model, r.method, r.damping, std::to_string(r.T), std::to_string(r.D), opt_number(r.gain),
          opt_number(r.lambda), std::to_string(r.seed), r.converged ? "1" : "0", std::to_string(r.iterations),
          std::to_string(r.sweeps), std::to_string(r.resets), number(r.error), number(r.final_merit),
          number(r.elapsed), opt_number(r.lle), opt_number(r.gamma), opt_number(r.mismatch), opt_number(r.pl_lower),
          opt_number(r.pl_upper), r.error_tag});
  }
}

json to_json(const RunRecord& r) {
  auto opt = [](const std::optional<double>& x) { return x && std::isfinite(*x) ? json(*x) : json(nullptr); };
  auto fin = [](double x) { return std::isfinite(x) ? json(x) : json(number(x)); };
  return json{{"experiment", r.experiment},
              {"model", r.model},
              {"method", r.method},
              {"damping", r.damping},
              {"T", r.T},
              {"D", r.D},
              {"gain", opt(r.gain)},
              {"lambda", opt(r.lambda)},
              {"seed", r.seed},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"sweeps", r.sweeps},
              {"resets", r.resets},
              {"error", fin(r.error)},
              {"final_merit", fin(r.final_merit)},
              {"elapsed_s", r.elapsed},
              {"lle", opt(r.lle)},
              {"gamma", opt(r.gamma)},
              {"mismatch", opt(r.mismatch)},
              {"pl_lower", opt(r.pl_lower)},
              {"pl_upper", opt(r.pl_upper)},
              {"error_tag", r.error_tag}};
}

json history_json(const std::string& experiment, const std::vector<RunRecord>& rows) {
  json runs = json::array();
  for (const RunRecord& r : rows) {
    json row = to_json(r);
    json merit = json::array();
    json diff = json::array();
    for (const IterationRecord& h : r.history) {
      merit.push_back(std::isfinite(h.merit) ? json(h.merit) : json(number(h.merit)));
      diff.push_back(std::isfinite(h.max_abs_diff) ? json(h.max_abs_diff) : json(number(h.max_abs_diff)));
    }
    row["merit"] = std::move(merit);
    row["max_abs_diff"] = std::move(diff);
    runs.push_back(std::move(row));
  }
  return json{{"schema", ExperimentConfig::kSchema}, {"experiment", experiment}, {"runs", std::move(runs)}};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

OracleCheck oracle_lm_smoother(std::size_t T, std::size_t D, double lambda, std::uint64_t seed) {
  require(T >= 1 && D >= 1, "oracle lm-smoother: T and D must be at least 1");
  require(lambda > 0.0, "oracle lm-smoother: lambda must be positive");
  const MeanFieldRnn sys(D, 1.0, T, seed);
  Trajectory traj = rollout_sequential(sys);
  Rng rng(seed ^ 0x5EEDULL);
  for (Eigen::Index i = 0; i < traj.states().rows(); ++i)
    for (Eigen::Index j = 0; j < traj.states().cols(); ++j) traj.states()(i, j) += 0.5 * rng.normal();

  const Matrix J = assemble_big_j(sys, traj);
  RowMatrix r = residual(sys, traj);
  const Eigen::Map<const Vector> rv(r.data(), r.size());
  const Matrix N = J.transpose() * J + lambda * Matrix::Identity(J.rows(), J.cols());
  RowMatrix dense = traj.states();
  Eigen::Map<Vector>(dense.data(), dense.size()) -= N.ldlt().solve(J.transpose() * rv);

  ElkConfig cfg;
  cfg.lambda = lambda;
  cfg.mode = ElkMode::Smoother;
  const Trajectory step = elk_step(sys, traj, cfg);
  const double scale = std::max(1.0, dense.cwiseAbs().maxCoeff());
  return {"lm-smoother", (step.states() - dense).cwiseAbs().maxCoeff() / scale, 1e-8};
}

OracleCheck oracle_scan_fold(std::size_t T, std::size_t D, std::uint64_t seed, WorkerPool* pool) {
  require(T >= 1 && D >= 1, "oracle scan-fold: T and D must be at least 1");
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(D);
  std::vector<AffineOp> ops(T);
  for (AffineOp& op : ops) {
    Matrix A(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) A(i, j) = rng.normal() / std::sqrt(static_cast<double>(D));
    Vector b(d);
    for (Eigen::Index i = 0; i < d; ++i) b[i] = rng.normal();
    op = AffineOp{DenseTransition{A}, b};
  }
  const auto fast = parallel_scan(ops, pool);
  const auto ref = sequential_scan(ops);
  double worst = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const Matrix Af = to_dense(fast[t].A, D);
    const Matrix Ar = to_dense(ref[t].A, D);
    const double sa = std::max(1.0, Ar.cwiseAbs().maxCoeff());
    const double sb = std::max(1.0, ref[t].b.cwiseAbs().maxCoeff());
    worst = std::max({worst, (Af - Ar).cwiseAbs().maxCoeff() / sa, (fast[t].b - ref[t].b).cwiseAbs().maxCoeff() / sb});
  }
  return {"scan-fold", worst, 1e-10};
}

OracleCheck oracle_jinv(std::size_t T, std::size_t D, std::uint64_t seed) {
  require(T >= 1 && D >= 1, "oracle jinv: T and D must be at least 1");
  const MeanFieldRnn sys(D, 1.0, T, seed);
  const Trajectory traj = rollout_sequential(sys);
  const Matrix Jinv = assemble_big_j(sys, traj).inverse();
  const auto d = static_cast<Eigen::Index>(D);
  std::vector<Matrix> A;
  for (std::size_t t = 1; t <= T; ++t) A.push_back(sys.jacobian(t, traj.at(t - 1)));
  double worst = 0.0;
  for (std::size_t tau = 1; tau <= T; ++tau) {
    Matrix expect = Matrix::Identity(d, d);
    for (std::size_t t = 1; t <= T; ++t) {
      const Matrix block = Jinv.block(d * static_cast<Eigen::Index>(t - 1), d * static_cast<Eigen::Index>(tau - 1), d, d);
      if (t < tau) {
        worst = std::max(worst, block.cwiseAbs().maxCoeff());
        continue;
      }
      if (t > tau) expect = A[t - 1] * expect;
      const double scale = std::max(1.0, expect.cwiseAbs().maxCoeff());
      worst = std::max(worst, (block - expect).cwiseAbs().maxCoeff() / scale);
    }
  }
  return {"jinv", worst, 1e-10};
}

}  // namespace seqpar
