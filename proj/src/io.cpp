#include <galflow/io.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

namespace galflow {

namespace {

using nlohmann::json;

/// CSV cell quoting: wrap and double quotes when the text holds separators.
std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string flag(bool b) { return b ? "1" : "0"; }

std::string hash_header(const std::string& config_hash) {
  return "# config: " + config_hash + "\n";
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

template <int Dim>
std::string density_csv_impl(const Trajectory<Dim>& traj, const Grid<Dim>& grid,
                             const std::string& config_hash) {
  if (traj.nodes() == 0) throw std::invalid_argument("density_csv: empty trajectory");
  std::string out = hash_header(config_hash);
  out += "time";
  for (int c = 0; c < grid.cells(); ++c) {
    const auto x = grid.center(c);
    out += ',' + format_real(x[0]);
    if constexpr (Dim == 2) out += '|' + format_real(x[1]);
  }
  out += '\n';
  for (int j = 0; j < traj.nodes(); ++j) {
    out += format_real(traj.times[j]);
    const Eigen::VectorXd& values = traj.density[j].values;
    for (int c = 0; c < values.size(); ++c) out += ',' + format_real(values[c]);
    out += '\n';
  }
  return out;
}

template <int Dim>
std::string trajectory_json_impl(const Trajectory<Dim>& traj, const Grid<Dim>& grid,
                                 const Scenario& sc, const std::string& config_hash) {
  json doc;
  doc["config_hash"] = config_hash;
  doc["dimension"] = Dim;
  doc["grid_cells"] = grid.n;
  doc["cell_width"] = grid.h;
  doc["node_dt"] = traj.node_dt;
  doc["substeps_per_node"] = traj.substeps_per_node;
  doc["refine"] = traj.refine;

  json scenario;
  scenario["modes"] = sc.modes;
  scenario["seed"] = sc.seed;
  scenario["t_final"] = sc.t_final;
  scenario["pressure_coeff"] = sc.pressure_coeff;
  scenario["eps"] = sc.eps;
  scenario["delta"] = sc.delta;
  scenario["density_preset"] = to_string(sc.density_preset);
  scenario["momentum_preset"] = to_string(sc.momentum_preset);
  doc["scenario"] = scenario;

  json times = json::array();
  for (const real_t t : traj.times) times.push_back(t);
  doc["times"] = times;

  json velocity = json::array();
  for (const auto& coeffs : traj.velocity) velocity.push_back(vector_json(coeffs));
  doc["velocity_coefficients"] = velocity;

  json density = json::array();
  for (const auto& field : traj.density) density.push_back(vector_json(field.values));
  doc["density"] = density;

  json momentum = json::array();
  for (const auto& m : traj.momentum_integral) momentum.push_back(vector_json(m));
  doc["momentum_integral"] = momentum;

  return doc.dump(2) + "\n";
}

json record_json(const SweepRecord& rec) {
  json r;
  r["delta"] = rec.delta;
  r["eps"] = rec.eps;
  r["n_coarse"] = rec.n_coarse;
  r["n_fine"] = rec.n_fine;
  r["ok"] = rec.ok;
  r["error"] = rec.error;
  r["energy_residual"] = rec.energy_residual;
  r["energy_tolerance"] = rec.energy_tolerance;
  r["energy_pass"] = rec.energy_pass;
  r["defect_norm"] = rec.defect_norm;
  r["sqrt_eps_grad"] = rec.sqrt_eps_grad;
  r["correction_norm"] = rec.correction_norm;
  r["tail_masses"] = rec.tail_masses;
  r["psd_floor"] = rec.psd_floor;
  r["psd_ok"] = rec.psd_ok;
  r["trace_incompatible"] = rec.trace_incompatible;
  return r;
}

}  // namespace

std::string format_real(real_t v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
  return buf;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string ledger_csv(const EnergyAudit& audit, const std::string& config_hash) {
  std::string out = hash_header(config_hash);
  out += "time,kinetic,potential,visc_diss,art_diss,residual,potential_balance\n";
  for (const EnergyRow& row : audit.rows) {
    out += format_real(row.time) + ',' + format_real(row.kinetic) + ',' +
           format_real(row.potential) + ',' + format_real(row.visc_diss) + ',' +
           format_real(row.art_diss) + ',' + format_real(row.residual) + ',' +
           format_real(row.potential_balance) + '\n';
  }
  return out;
}

std::string windows_csv(const std::vector<WindowDiagnostics>& windows,
                        const std::string& config_hash) {
  std::string out = hash_header(config_hash);
  out += "window,start_node,node_count,iterations,halvings,theta,final_delta\n";
  for (size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    out += std::to_string(w) + ',' + std::to_string(win.start_node) + ',' +
           std::to_string(win.node_count) + ',' + std::to_string(win.iterations) + ',' +
           std::to_string(win.halvings) + ',' + format_real(win.theta()) + ',' +
           format_real(win.final_delta) + '\n';
  }
  return out;
}

std::string envelopes_csv(const std::vector<EnvelopeReport>& envelopes,
                          const std::string& config_hash) {
  std::string out = hash_header(config_hash);
  out +=
      "time,sup_div,pure_upper,pure_lower,upper_allowed,lower_allowed,"
      "observed_max,observed_min,over_upper,under_lower,ok\n";
  for (const auto& r : envelopes) {
    out += format_real(r.time) + ',' + format_real(r.sup_div) + ',' +
           format_real(r.pure_upper) + ',' + format_real(r.pure_lower) + ',' +
           format_real(r.upper_allowed) + ',' + format_real(r.lower_allowed) + ',' +
           format_real(r.observed_max) + ',' + format_real(r.observed_min) + ',' +
           format_real(r.over_upper) + ',' + format_real(r.under_lower) + ',' + flag(r.ok) + '\n';
  }
  return out;
}

std::string density_csv(const Trajectory<1>& traj, const Grid<1>& grid,
                        const std::string& config_hash) {
  return density_csv_impl(traj, grid, config_hash);
}

std::string density_csv(const Trajectory<2>& traj, const Grid<2>& grid,
                        const std::string& config_hash) {
  return density_csv_impl(traj, grid, config_hash);
}

std::string trajectory_json(const Trajectory<1>& traj, const Grid<1>& grid, const Scenario& sc,
                            const std::string& config_hash) {
  return trajectory_json_impl(traj, grid, sc, config_hash);
}

std::string trajectory_json(const Trajectory<2>& traj, const Grid<2>& grid, const Scenario& sc,
                            const std::string& config_hash) {
  return trajectory_json_impl(traj, grid, sc, config_hash);
}

std::string sweep_summary_csv(const SweepReport& report, const std::string& config_hash) {
  std::string out = hash_header(config_hash);
  out +=
      "delta,eps,n_coarse,n_fine,status,error,energy_residual,energy_tolerance,"
      "energy_pass,defect_norm,sqrt_eps_grad,correction_norm,psd_floor,psd_ok,"
      "trace_incompatible,group_verdict\n";
  for (const SweepGroup& group : report.groups) {
    for (const SweepRecord& rec : group.rungs) {
      out += format_real(rec.delta) + ',' + format_real(rec.eps) + ',' +
             std::to_string(rec.n_coarse) + ',' + std::to_string(rec.n_fine) + ',' +
             (rec.ok ? "ok" : "failed") + ',' + quote_csv(rec.error) + ',' +
             format_real(rec.energy_residual) + ',' + format_real(rec.energy_tolerance) + ',' +
             flag(rec.energy_pass) + ',' + format_real(rec.defect_norm) + ',' +
             format_real(rec.sqrt_eps_grad) + ',' + format_real(rec.correction_norm) + ',' +
             format_real(rec.psd_floor) + ',' + flag(rec.psd_ok) + ',' +
             flag(rec.trace_incompatible) + ',' + quote_csv(group.verdict) + '\n';
    }
  }
  return out;
}

std::string sweep_scalings_csv(const SweepReport& report, const std::string& config_hash) {
  std::string out = hash_header(config_hash);
  out += "delta,n,slope,grad_ratio,ok\n";
  for (const CorrectionScaling& s : report.scalings) {
    out += format_real(s.delta) + ',' + std::to_string(s.n) + ',' + format_real(s.slope) + ',' +
           format_real(s.grad_ratio) + ',' + flag(s.ok) + '\n';
  }
  return out;
}

std::string sweep_json(const SweepReport& report, const std::string& config_hash) {
  json doc;
  doc["config_hash"] = config_hash;
  doc["failures"] = report.failures;

  json groups = json::array();
  for (const SweepGroup& group : report.groups) {
    json g;
    g["delta"] = group.delta;
    g["eps"] = group.eps;
    g["defect_monotone"] = group.defect_monotone;
    g["q_exceeds_dim"] = group.q_exceeds_dim;
    g["verdict"] = group.verdict;
    json rungs = json::array();
    for (const SweepRecord& rec : group.rungs) rungs.push_back(record_json(rec));
    g["rungs"] = rungs;
    groups.push_back(g);
  }
  doc["groups"] = groups;

  json scalings = json::array();
  for (const CorrectionScaling& s : report.scalings) {
    json sj;
    sj["delta"] = s.delta;
    sj["n"] = s.n;
    sj["slope"] = s.slope;
    sj["grad_ratio"] = s.grad_ratio;
    sj["ok"] = s.ok;
    scalings.push_back(sj);
  }
  doc["scalings"] = scalings;

  return doc.dump(2) + "\n";
}

std::string manifest_text(const std::string& command, const std::string& config_hash,
                          const std::vector<std::string>& verdicts,
                          const std::vector<ArtifactEntry>& artifacts) {
  std::string out;
  out += "galflow run manifest\n";
  out += "command: " + command + '\n';
  out += "config: fnv1a:" + config_hash + '\n';
  out += std::string("generator: galflow ") + kGalflowVersion + '\n';
  out += "eigen: " + std::to_string(EIGEN_WORLD_VERSION) + '.' +
         std::to_string(EIGEN_MAJOR_VERSION) + '.' + std::to_string(EIGEN_MINOR_VERSION) + '\n';
  out += "verdicts:\n";
  for (const std::string& v : verdicts) out += "  - " + v + '\n';
  out += "artifacts:\n";
  for (const ArtifactEntry& a : artifacts)
    out += "  - " + a.name + " fnv1a:" + a.content_hash + '\n';
  return out;
}

}  // namespace galflow
