#include "seqpar/bench.hpp"
#include "seqpar/diagnostics.hpp"
#include "seqpar/elk.hpp"
#include "seqpar/fixedpoint.hpp"
#include "seqpar/models.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

using namespace seqpar;
using nlohmann::json;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

json num(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

struct ModelArgs {
  std::string kind = "scalar_affine";
  std::size_t T = 100;
  std::optional<std::size_t> dim;
  std::uint64_t seed = 0;
  std::optional<double> alpha, s0, gain, forcing, dt, eps, r;

  void attach(CLI::App* app) {
    app->add_option("--model", kind, "scalar_affine | mean_field_rnn | gru | lorenz96 | langevin_two_well | s5 | logistic")
        ->required();
    app->add_option("-T,--horizon", T, "sequence length")->check(CLI::PositiveNumber);
    app->add_option("-D,--dim", dim, "state dimension where the model allows it");
    app->add_option("--seed", seed, "model seed (weights, inputs, noise)");
    app->add_option("--alpha", alpha, "scalar_affine coefficient");
    app->add_option("--s0", s0, "initial value for scalar_affine and logistic");
    app->add_option("--gain", gain, "mean_field_rnn gain g");
    app->add_option("--forcing", forcing, "lorenz96 forcing F");
    app->add_option("--dt", dt, "lorenz96 step size");
    app->add_option("--eps", eps, "langevin step size");
    app->add_option("--r", r, "logistic parameter");
  }

  [[nodiscard]] std::unique_ptr<DynamicsSystem> build() const {
    ModelSpec spec;
    spec.kind = ModelSpec::parse_kind(kind);
    spec.dim = dim;
    spec.seed = seed;
    spec.s0 = s0;
    if (alpha) spec.alpha = *alpha;
    if (gain) spec.gain = *gain;
    if (forcing) spec.forcing = *forcing;
    if (dt) spec.dt = *dt;
    if (eps) spec.eps = *eps;
    if (r) spec.r = *r;
    return seqpar::build(spec, T);
  }
};

struct SolveArgs {
  std::string method = "newton";
  std::string damping = "none";
  std::string init = "jacobi";
  double tol = 1e-4;
  std::optional<std::size_t> max_iters, window, diag_samples, workers;
  double lambda = 1.0;
  std::string elk_mode = "filter";
  std::string elk_jacobian = "full";
  bool history = false;

  void attach(CLI::App* app) {
    app->add_option("--method", method, "newton | quasi | picard | jacobi | scaled:<a> | elk");
    app->add_option("--damping", damping, "none | scale:<k> | clip | clip:<lo>:<hi>");
    app->add_option("--init", init, "zeros | random | jacobi");
    app->add_option("--tol", tol, "stopping tolerance on the max-abs update");
    app->add_option("--max-iters", max_iters, "iteration cap (default T)");
    app->add_option("--window", window, "sliding window length");
    app->add_option("--diag-samples", diag_samples, "Hutchinson probes for the quasi diagonal");
    app->add_option("--lambda", lambda, "ELK trust-region strength");
    app->add_option("--elk-mode", elk_mode, "filter | smoother");
    app->add_option("--elk-jacobian", elk_jacobian, "full | diagonal");
    app->add_option("--workers", workers, "worker threads (default SEQPAR_WORKERS or hardware)");
    app->add_flag("--history", history, "include per-sweep merit and update size");
  }
};

int cmd_solve(const ModelArgs& m, const SolveArgs& a) {
  const auto sys = m.build();
  SolverConfig cfg;
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.window = a.window;
  cfg.diag_samples = a.diag_samples;
  cfg.init = parse_init(a.init, m.seed);
  cfg.damping = parse_damping(a.damping);
  cfg.pool = std::make_shared<WorkerPool>(a.workers.value_or(WorkerPool::default_width()));

  SolveReport report;
  std::string label;
  if (a.method == "elk") {
    ElkConfig elk;
    elk.lambda = a.lambda;
    elk.mode = parse_elk_mode(a.elk_mode);
    elk.jacobian = parse_elk_jacobian(a.elk_jacobian);
    if (cfg.damping.kind != Damping::Kind::None) throw ContractViolation("ELK takes no damping");
    elk.solver = cfg;
    MethodSpec spec;
    spec.kind = MethodSpec::Kind::Elk;
    spec.elk_mode = elk.mode;
    spec.elk_jacobian = elk.jacobian;
    label = spec.label();
    report = elk_solve(*sys, elk);
  } else {
    const SolverMethod method = SolverMethod::parse(a.method);
    MethodSpec spec;
    spec.method = method;
    label = spec.label();
    report = fixed_point_solve(*sys, cfg, method);
  }
  const Trajectory star = rollout_sequential(*sys);
  json out{{"model", sys->name()},
           {"method", label},
           {"damping", cfg.damping.name()},
           {"T", sys->horizon()},
           {"D", sys->dim()},
           {"converged", report.converged},
           {"iterations", report.iterations},
           {"sweeps", report.sweeps},
           {"resets", report.resets},
           {"error", num(max_abs_diff(report.trajectory, star))},
           {"final_merit", num(merit(*sys, report.trajectory))},
           {"elapsed_s", report.elapsed}};
  if (a.history) {
    json merit = json::array();
    json diff = json::array();
    for (const auto& h : report.history) {
      merit.push_back(num(h.merit));
      diff.push_back(num(h.max_abs_diff));
    }
    out["merit"] = merit;
    out["max_abs_diff"] = diff;
  }
  print(out);
  return 0;
}

int cmd_bench(const std::string& config, const std::optional<std::string>& output,
              const std::optional<std::string>& history, std::optional<std::size_t> workers, bool dry_run) {
  ExperimentConfig cfg = ExperimentConfig::load(config);
  if (dry_run) {
    print(json{{"experiment", cfg.name}, {"rows_planned", planned_rows(cfg)}});
    return 0;
  }
  if (workers) cfg.workers = workers;
  if (history) cfg.history = true;
  const auto rows = run_experiment(cfg);
  std::ostringstream csv;
  write_csv(csv, rows);
  const std::string path = output.value_or(cfg.output);
  if (path.empty() || path == "-") {
    std::cout << csv.str();
  } else {
    write_file_atomic(path, csv.str());
  }
  if (history) write_file_atomic(*history, history_json(cfg.name, rows).dump(1) + "\n");
  std::size_t converged = 0;
  std::size_t failed = 0;
  for (const auto& r : rows) {
    converged += r.converged ? 1 : 0;
    failed += r.error_tag.empty() ? 0 : 1;
  }
  if (!path.empty() && path != "-")
    print(json{{"experiment", cfg.name}, {"rows", rows.size()}, {"converged", converged}, {"failed", failed},
               {"output", path}});
  return 0;
}

int cmd_lle(const ModelArgs& m, std::size_t probes, std::uint64_t probe_seed) {
  const auto sys = m.build();
  const LleEstimate est = estimate_lle(*sys, rollout_sequential(*sys), probes, probe_seed);
  json per = json::array();
  for (double v : est.per_probe) per.push_back(num(v));
  print(json{{"model", sys->name()}, {"T", est.horizon}, {"probes", est.probes}, {"lle", num(est.lambda)},
             {"per_probe", per}});
  return 0;
}

int cmd_oracle(const OracleCheck& c) {
  print(json{{"check", c.name}, {"max_deviation", num(c.deviation)}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
  return c.pass() ? 0 : kRuntime;
}

void fail(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel-in-time evaluation of nonlinear state space models"};
  app.require_subcommand(1);

  ModelArgs solve_model;
  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "solve one model with one method and print the report");
  solve_model.attach(solve);
  solve_args.attach(solve);

  std::string config;
  std::optional<std::string> output, history;
  std::optional<std::size_t> bench_workers;
  auto* bench = app.add_subcommand("bench", "run an experiment config and write a CSV report");
  bench->add_option("--config", config, "experiment JSON file")->required();
  bench->add_option("--output", output, "CSV path ('-' for stdout); overrides the config");
  bench->add_option("--history", history, "also write per-sweep histories to this JSON file");
  bench->add_option("--workers", bench_workers, "worker threads");
  bool dry_run = false;
  bench->add_flag("--dry-run", dry_run, "validate the config and report the planned row count");

  ModelArgs lle_model;
  std::size_t probes = 3;
  std::uint64_t probe_seed = 0;
  auto* lle = app.add_subcommand("lle", "estimate the largest Lyapunov exponent along the rollout");
  lle_model.attach(lle);
  lle->add_option("--probes", probes, "number of random initial directions")->check(CLI::PositiveNumber);
  lle->add_option("--probe-seed", probe_seed, "seed for the probe directions");

  auto* diagnose = app.add_subcommand("diagnose", "conditioning and rate diagnostics");
  diagnose->require_subcommand(1);
  std::size_t diag_T = 1;
  auto* picard = diagnose->add_subcommand("picard-norm", "spectral norm of the inverse Picard system");
  picard->add_option("-T,--horizon", diag_T, "sequence length")->required();

  double pl_lle = 0.0, pl_a = 1.0, pl_b = 1.0;
  std::size_t pl_T = 1, pl_D = 1;
  auto* pl = diagnose->add_subcommand("pl-bounds", "bounds on the smallest singular value of J");
  pl->add_option("--lle", pl_lle, "largest Lyapunov exponent")->required();
  pl->add_option("-T,--horizon", pl_T, "sequence length")->required();
  pl->add_option("-D,--dim", pl_D, "state dimension");
  pl->add_option("--a", pl_a, "burn-in constant a >= 1");
  pl->add_option("--b", pl_b, "burn-in constant b in (0, 1]");

  double mu = 1.0, lip = 0.0;
  auto* basin = diagnose->add_subcommand("basin", "radius of the Gauss-Newton basin 2 mu / L");
  basin->add_option("--mu", mu, "PL constant")->required();
  basin->add_option("--L", lip, "Lipschitz constant of the Jacobian")->required();

  ModelArgs rate_model;
  std::string rate_method = "jacobi";
  auto* gamma = diagnose->add_subcommand("gamma", "asymptotic linear rate of a method at the solution");
  rate_model.attach(gamma);
  gamma->add_option("--method", rate_method, "newton | quasi | picard | jacobi | scaled:<a>");
  auto* mismatch = diagnose->add_subcommand("mismatch", "spectral norm of the surrogate Jacobian mismatch");
  rate_model.attach(mismatch);
  mismatch->add_option("--method", rate_method, "newton | quasi | picard | jacobi | scaled:<a>");

  auto* oracle = app.add_subcommand("oracle", "dense small-scale equivalence checks");
  oracle->require_subcommand(1);
  std::size_t oT = 16, oD = 3;
  double o_lambda = 1.0;
  std::uint64_t o_seed = 0;
  auto attach_oracle = [&](CLI::App* sub, bool with_lambda) {
    sub->add_option("-T,--horizon", oT, "sequence length")->check(CLI::PositiveNumber);
    sub->add_option("-D,--dim", oD, "state dimension")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o_seed, "seed");
    if (with_lambda) sub->add_option("--lambda", o_lambda, "trust-region strength");
  };
  auto* o_lm = oracle->add_subcommand("lm-smoother", "ELK smoother step vs. dense damped normal equations");
  attach_oracle(o_lm, true);
  auto* o_scan = oracle->add_subcommand("scan-fold", "parallel scan vs. sequential fold");
  attach_oracle(o_scan, false);
  auto* o_jinv = oracle->add_subcommand("jinv", "inverse of J vs. Jacobian chain products");
  attach_oracle(o_jinv, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return kUsage;
  }

  try {
    if (*solve) return cmd_solve(solve_model, solve_args);
    if (*bench) return cmd_bench(config, output, history, bench_workers, dry_run);
    if (*lle) return cmd_lle(lle_model, probes, probe_seed);
    if (*picard) {
      print(json{{"T", diag_T}, {"value", picard_inverse_norm(diag_T)}});
      return 0;
    }
    if (*pl) {
      const PlBounds b = pl_bounds(pl_lle, pl_a, pl_b, pl_T, pl_D);
      print(json{{"lle", b.lle}, {"a", b.a_burn}, {"b", b.b_burn}, {"T", b.T}, {"D", b.D}, {"lower", num(b.lower)},
                 {"upper", num(b.upper)}});
      return 0;
    }
    if (*basin) {
      print(json{{"mu", mu}, {"L", lip}, {"radius", num(basin_radius(mu, lip))}});
      return 0;
    }
    if (*gamma || *mismatch) {
      const auto sys = rate_model.build();
      const Trajectory star = rollout_sequential(*sys);
      const SolverMethod method = SolverMethod::parse(rate_method);
      const double value = *gamma ? asymptotic_rate(*sys, star, method) : jacobian_mismatch(*sys, star, method);
      print(json{{"model", sys->name()}, {"method", method.name()}, {"T", sys->horizon()}, {"value", num(value)}});
      return 0;
    }
    if (*o_lm) return cmd_oracle(oracle_lm_smoother(oT, oD, o_lambda, o_seed));
    if (*o_scan) {
      WorkerPool pool(WorkerPool::default_width());
      return cmd_oracle(oracle_scan_fold(oT, oD, o_seed, &pool));
    }
    if (*o_jinv) return cmd_oracle(oracle_jinv(oT, oD, o_seed));
  } catch (const ContractViolation& e) {
    fail("invalid_argument", e.what());
    return kUsage;
  } catch (const NumericalError& e) {
    fail("numerical", e.what());
    return kRuntime;
  } catch (const std::exception& e) {
    fail("runtime", e.what());
    return kRuntime;
  }
  fail("usage", "no command given");
  return kUsage;
}
