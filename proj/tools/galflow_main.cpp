// galflow: scenario simulations, parameter sweeps, and convex-analysis /
// integrability utilities behind one deterministic command-line front end.
//
// Exit codes: 0 success (including sweeps with recorded per-point failures),
// 2 configuration or validation error, 3 solver failure, 4 failed audit
// verdict (audit subcommand only), 5 artifact write failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <galflow/conjugate.hpp>
#include <galflow/io.hpp>
#include <galflow/orlicz.hpp>
#include <galflow/scenario.hpp>

namespace {

using namespace galflow;

struct ConfigInput {
  ConfigMap map;
  std::string hash;  ///< fnv1a of the raw bytes plus any seed override
};

ConfigInput load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  std::string text = read_text_file(path);
  std::string hashed = text;
  if (seed) hashed += "\nseed-override: " + std::to_string(*seed);
  return ConfigInput{ConfigMap::parse_string(text, path), fnv1a_hex(hashed)};
}

/// Writes one artifact and records it for the manifest.
class ArtifactSink {
 public:
  ArtifactSink(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  void add(const std::string& name, const std::string& content) {
    write_text_file(dir_ + "/" + name, content);
    entries_.push_back({name, fnv1a_hex(content)});
  }

  void finish(const std::string& command, const std::string& config_hash,
              const std::vector<std::string>& verdicts) {
    const std::string manifest = manifest_text(command, config_hash, verdicts, entries_);
    write_text_file(dir_ + "/manifest.txt", manifest);
    std::cout << "wrote " << entries_.size() + 1 << " artifacts to " << dir_
              << " (config fnv1a:" << config_hash << ")\n";
  }

 private:
  std::string dir_;
  std::vector<ArtifactEntry> entries_;
};

std::string pass_fail(bool ok) { return ok ? "pass" : "FAIL"; }

template <int Dim>
std::vector<std::string> run_verdicts(const ScenarioRun<Dim>& run) {
  int violations = 0;
  for (const auto& env : run.envelopes)
    if (!env.ok) ++violations;
  const bool mass_ok = run.mass_drift <= 1e-9;
  real_t worst_theta = 0;
  for (const auto& win : run.trajectory.windows) worst_theta = std::max(worst_theta, win.theta());
  std::vector<std::string> verdicts;
  verdicts.push_back("energy audit: " + pass_fail(run.audit.pass) + " (worst residual " +
                     format_real(run.audit.worst_residual) + " vs tolerance " +
                     format_real(run.audit.tolerance) + ")");
  verdicts.push_back("density envelopes: " + pass_fail(violations == 0) + " (" +
                     std::to_string(violations) + " of " + std::to_string(run.envelopes.size()) +
                     " nodes violated)");
  verdicts.push_back("mass conservation: " + pass_fail(mass_ok) + " (relative drift " +
                     format_real(run.mass_drift) + ")");
  verdicts.push_back("picard contraction: " + pass_fail(worst_theta < 1) + " (worst theta " +
                     format_real(worst_theta) + ")");
  return verdicts;
}

template <int Dim>
int simulate_artifacts(const Scenario& sc, const ConfigInput& input, const std::string& out_dir,
                       bool audit_mode) {
  ScenarioRun<Dim> run;
  try {
    run = run_scenario<Dim>(sc);
  } catch (const std::runtime_error& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  }

  const auto verdicts = run_verdicts(run);

  if (audit_mode) {
    std::cout << ledger_csv(run.audit, input.hash);
    for (const auto& v : verdicts) std::cout << "# " << v << "\n";
    return run.audit.pass ? 0 : 4;
  }

  try {
    ArtifactSink sink(out_dir);
    sink.add("trajectory.json", trajectory_json(run.reported, run.grid, sc, input.hash));
    sink.add("ledger.csv", ledger_csv(run.audit, input.hash));
    sink.add("density.csv", density_csv(run.reported, run.grid, input.hash));
    sink.add("windows.csv", windows_csv(run.trajectory.windows, input.hash));
    sink.add("envelopes.csv", envelopes_csv(run.envelopes, input.hash));
    sink.finish(audit_mode ? "audit" : "simulate", input.hash, verdicts);
  } catch (const std::runtime_error& e) {
    std::cerr << "artifact write failure: " << e.what() << "\n";
    return 5;
  }
  for (const auto& v : verdicts) std::cout << v << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed, bool audit_mode) {
  ConfigInput input{ConfigMap{}, ""};
  Scenario sc;
  try {
    input = load_config(config_path, seed);
    sc = Scenario::from_config(input.map);
    if (seed) sc.seed = *seed;
    input.map.check_consumed();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return sc.dim == 1 ? simulate_artifacts<1>(sc, input, out_dir, audit_mode)
                     : simulate_artifacts<2>(sc, input, out_dir, audit_mode);
}

template <int Dim>
int sweep_artifacts(const Scenario& sc, const SweepPlan& plan, const ConfigInput& input,
                    const std::string& out_dir, int workers) {
  SweepReport report;
  try {
    report = run_sweep(sweep_scenario_from<Dim>(sc), plan, workers);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "sweep failure: " << e.what() << "\n";
    return 3;
  }

  std::vector<std::string> verdicts;
  for (const auto& group : report.groups) {
    int failed = 0;
    for (const auto& rec : group.rungs)
      if (!rec.ok) ++failed;
    std::string line = "delta=" + format_real(group.delta) + " eps=" + format_real(group.eps) +
                       ": " + group.verdict;
    if (failed > 0)
      line += " (" + std::to_string(failed) + " of " + std::to_string(group.rungs.size()) +
              " rungs failed)";
    verdicts.push_back(line);
    std::cout << line << "\n";
  }
  verdicts.push_back("failures: " + std::to_string(report.failures));

  try {
    ArtifactSink sink(out_dir);
    sink.add("sweep_summary.csv", sweep_summary_csv(report, input.hash));
    sink.add("sweep_scalings.csv", sweep_scalings_csv(report, input.hash));
    sink.add("sweep.json", sweep_json(report, input.hash));
    sink.finish("sweep", input.hash, verdicts);
  } catch (const std::runtime_error& e) {
    std::cerr << "artifact write failure: " << e.what() << "\n";
    return 5;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, int workers,
              const std::optional<std::uint64_t>& seed) {
  ConfigInput input{ConfigMap{}, ""};
  Scenario sc;
  SweepPlan plan;
  try {
    input = load_config(config_path, seed);
    sc = Scenario::from_config(input.map);
    if (seed) sc.seed = *seed;
    plan = sweep_plan_from_config(input.map);
    input.map.check_consumed();
    plan.validate(sc.grid_cells, sc.dim);
    if (workers < 1) throw std::invalid_argument("--workers: must be >= 1");
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return sc.dim == 1 ? sweep_artifacts<1>(sc, plan, input, out_dir, workers)
                     : sweep_artifacts<2>(sc, plan, input, out_dir, workers);
}

template <int Dim>
void print_conjugate_rows(const PotentialSpec& spec, const std::vector<real_t>& radii) {
  const SymTensor<Dim> direction =
      SymTensor<Dim>::Identity() * (real_t(1) / std::sqrt(real_t(Dim)));
  for (const real_t r : radii) {
    const auto cv = conjugate_of<Dim>(spec, direction * r);
    std::cout << format_real(r) << ','
              << (cv.saturated ? format_real(cv.value) : std::string("divergent")) << "\n";
  }
}

int cmd_conjugate(const std::string& config_path) {
  ConfigInput input{ConfigMap{}, ""};
  PotentialSpec spec;
  std::vector<real_t> radii;
  int dim = 1;
  try {
    input = load_config(config_path, std::nullopt);
    spec = potential_from_config(input.map);
    spec.validate();
    dim = static_cast<int>(input.map.get_int("conjugate.dimension", 1));
    radii = input.map.get_reals("conjugate.radii", {0.5, 1.0, 2.0, 4.0});
    input.map.check_consumed();
    if (dim != 1 && dim != 2)
      throw std::invalid_argument("conjugate.dimension: must be 1 or 2");
    for (const real_t r : radii)
      if (!(r >= 0) || !std::isfinite(r))
        throw std::invalid_argument("conjugate.radii: radii must be finite and >= 0");
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::cout << "# config: " << input.hash << "\n";
  std::cout << "radius,conjugate\n";
  if (dim == 1)
    print_conjugate_rows<1>(spec, radii);
  else
    print_conjugate_rows<2>(spec, radii);
  return 0;
}

std::string quote_report(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

int cmd_orlicz(const std::string& config_path, const std::string& out_dir, bool write_out,
               int workers) {
  ConfigInput input{ConfigMap{}, ""};
  SampleFamily family;
  long long window = kDefaultLevelWindow;
  ThresholdOptions opts;
  std::string family_name;
  try {
    input = load_config(config_path, std::nullopt);
    const ConfigMap& cfg = input.map;
    family_name = cfg.get_string("orlicz.family");
    if (family_name == "inverse_sqrt") {
      family = family_inverse_sqrt(cfg.get_int("orlicz.cells", 65536));
    } else if (family_name == "spike") {
      family = family_spike(static_cast<int>(cfg.get_int("orlicz.count", 10)));
    } else if (family_name == "constant") {
      const real_t value = cfg.get_real("orlicz.value", 1.0);
      const long long cells = cfg.get_int("orlicz.cells", 1024);
      if (cells < 1) throw std::invalid_argument("orlicz.cells: must be >= 1");
      family.members = {Eigen::VectorXd::Constant(cells, value)};
      family.cell_measure = real_t(1) / static_cast<real_t>(cells);
      family.validate();
    } else if (family_name == "csv") {
      family = load_family_csv(cfg.get_string("orlicz.path"),
                               cfg.get_real("orlicz.cell_measure", -1.0));
    } else {
      throw std::invalid_argument("orlicz.family: unknown family '" + family_name +
                                  "' (expected inverse_sqrt, spike, constant, csv)");
    }
    window = cfg.get_int("orlicz.window", window);
    opts.threshold_count = static_cast<int>(cfg.get_int("orlicz.threshold_count", 40));
    cfg.check_consumed();
    if (window < 1) throw std::invalid_argument("orlicz.window: must be >= 1");
    if (opts.threshold_count < 1)
      throw std::invalid_argument("orlicz.threshold_count: must be >= 1");
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  const TailTable tails = tail_masses(family, window, workers);
  const ThresholdSelection selection = select_thresholds(family, tails, opts);

  std::cout << "# config: " << input.hash << "\n";
  std::cout << "key,value\n";
  std::cout << "family," << family_name << "\n";
  std::cout << "members," << family.members.size() << "\n";
  std::cout << "window," << window << "\n";
  switch (selection.status) {
    case ThresholdStatus::certified: {
      const YoungFunction young =
          build_young(selection.thresholds, selection.doubling_c, opts.threshold_count);
      const real_t bound = orlicz_bound(family, young, workers);
      const Delta2Report delta2 = delta2_verify(young);
      std::cout << "status,certified\n";
      std::cout << "threshold_count," << selection.thresholds.size() << "\n";
      std::cout << "threshold_first," << selection.thresholds.front() << "\n";
      std::cout << "threshold_last," << selection.thresholds.back() << "\n";
      std::cout << "doubling_c," << selection.doubling_c << "\n";
      std::cout << "orlicz_bound," << format_real(bound) << "\n";
      std::cout << "delta2_ok," << (delta2.ok ? 1 : 0) << "\n";
      std::cout << "delta2_K," << format_real(delta2.K) << "\n";
      std::cout << "delta2_t0," << format_real(delta2.t0) << "\n";
      if (write_out) {
        try {
          ArtifactSink sink(out_dir);
          save_young_csv(young, out_dir + "/young.csv");
          sink.add("selection.txt", selection.report + "\n");
          sink.finish("orlicz", input.hash,
                      {"selection: certified", "delta2: " + pass_fail(delta2.ok)});
        } catch (const std::runtime_error& e) {
          std::cerr << "artifact write failure: " << e.what() << "\n";
          return 5;
        }
      }
      break;
    }
    case ThresholdStatus::violation:
      std::cout << "status,violation\n";
      std::cout << "failed_index," << selection.failed_index << "\n";
      std::cout << "required_bound," << format_real(selection.required_bound) << "\n";
      std::cout << "window_start_tail," << format_real(selection.window_start_tail) << "\n";
      std::cout << "window_end_tail," << format_real(selection.window_end_tail) << "\n";
      std::cout << "report," << quote_report(selection.report) << "\n";
      break;
    case ThresholdStatus::undetermined:
      std::cout << "status,undetermined\n";
      std::cout << "failed_index," << selection.failed_index << "\n";
      std::cout << "window_start_tail," << format_real(selection.window_start_tail) << "\n";
      std::cout << "window_end_tail," << format_real(selection.window_end_tail) << "\n";
      std::cout << "report," << quote_report(selection.report) << "\n";
      break;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"galflow: spectral compressible-flow laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  int workers = 1;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool with_out, bool with_workers, bool with_seed) {
    cmd->add_option("--config", config_path, "configuration file")->required();
    if (with_out) cmd->add_option("--out", out_dir, "output directory (default: .)");
    if (with_workers) cmd->add_option("--workers", workers, "worker threads (default: 1)");
    if (with_seed) {
      auto* opt = cmd->add_option("--seed", "override scenario.seed");
      opt->check(CLI::NonNegativeNumber);
      opt->each([&seed](const std::string& s) { seed = std::stoull(s); });
    }
  };

  auto* simulate = app.add_subcommand("simulate", "run one scenario and write artifacts");
  add_common(simulate, true, false, true);
  auto* sweep = app.add_subcommand("sweep", "run a (delta, eps, n) parameter study");
  add_common(sweep, true, true, true);
  auto* conjugate = app.add_subcommand("conjugate", "tabulate the convex conjugate");
  add_common(conjugate, false, false, false);
  auto* orlicz = app.add_subcommand("orlicz", "equi-integrability round-trip report");
  add_common(orlicz, true, true, false);
  auto* audit = app.add_subcommand("audit", "run one scenario and print its energy ledger");
  add_common(audit, false, false, true);

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) return cmd_simulate(config_path, out_dir, seed, false);
  if (sweep->parsed()) return cmd_sweep(config_path, out_dir, workers, seed);
  if (conjugate->parsed()) return cmd_conjugate(config_path);
  if (orlicz->parsed()) return cmd_orlicz(config_path, out_dir, orlicz->count("--out") > 0,
                                          workers);
  if (audit->parsed()) return cmd_simulate(config_path, "", seed, true);
  return 2;
}
