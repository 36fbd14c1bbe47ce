#include <galflow/scenario.hpp>

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace galflow {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cell;
  std::stringstream line(s);
  while (std::getline(line, cell, ',')) parts.push_back(trim(cell));
  return parts;
}

real_t parse_real(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw std::invalid_argument(field + ": empty value");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw std::invalid_argument(field + ": not a number: '" + t + "'");
  return static_cast<real_t>(v);
}

long long parse_int(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw std::invalid_argument(field + ": empty value");
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    throw std::invalid_argument(field + ": not an integer: '" + t + "'");
  return v;
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  cfg.origin_ = origin;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string at = origin + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw std::invalid_argument(at + ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw std::invalid_argument(at + ": empty section name");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(at + ": expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(at + ": empty key");
    if (section.empty())
      throw std::invalid_argument(at + ": key '" + key + "' appears before any [section]");
    const std::string field = section + "." + key;
    if (!cfg.entries_.emplace(field, value).second)
      throw std::invalid_argument(at + ": duplicate key '" + field + "'");
  }
  return cfg;
}

bool ConfigMap::has(const std::string& field) const {
  return entries_.count(field) != 0;
}

const std::string& ConfigMap::raw(const std::string& field) const {
  const auto it = entries_.find(field);
  if (it == entries_.end()) throw std::invalid_argument(field + ": missing required key");
  consumed_.insert(field);
  return it->second;
}

std::string ConfigMap::get_string(const std::string& field) const { return raw(field); }

std::string ConfigMap::get_string(const std::string& field, const std::string& fallback) const {
  return has(field) ? raw(field) : fallback;
}

real_t ConfigMap::get_real(const std::string& field) const {
  return parse_real(field, raw(field));
}

real_t ConfigMap::get_real(const std::string& field, real_t fallback) const {
  return has(field) ? get_real(field) : fallback;
}

long long ConfigMap::get_int(const std::string& field) const {
  return parse_int(field, raw(field));
}

long long ConfigMap::get_int(const std::string& field, long long fallback) const {
  return has(field) ? get_int(field) : fallback;
}

std::uint64_t ConfigMap::get_u64(const std::string& field, std::uint64_t fallback) const {
  if (!has(field)) return fallback;
  const std::string t = trim(raw(field));
  if (t.empty()) throw std::invalid_argument(field + ": empty value");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || t[0] == '-')
    throw std::invalid_argument(field + ": not an unsigned integer: '" + t + "'");
  return v;
}

bool ConfigMap::get_bool(const std::string& field, bool fallback) const {
  if (!has(field)) return fallback;
  const std::string t = raw(field);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument(field + ": expected true/false, got '" + t + "'");
}

std::vector<real_t> ConfigMap::get_reals(const std::string& field,
                                         std::vector<real_t> fallback) const {
  if (!has(field)) return fallback;
  std::vector<real_t> values;
  for (const std::string& cell : split_commas(raw(field)))
    values.push_back(parse_real(field, cell));
  return values;
}

std::vector<int> ConfigMap::get_ints(const std::string& field, std::vector<int> fallback) const {
  if (!has(field)) return fallback;
  std::vector<int> values;
  for (const std::string& cell : split_commas(raw(field)))
    values.push_back(static_cast<int>(parse_int(field, cell)));
  return values;
}

void ConfigMap::check_consumed() const {
  std::string leftovers;
  for (const auto& [field, value] : entries_)
    if (!consumed_.count(field)) leftovers += (leftovers.empty() ? "" : ", ") + field;
  if (!leftovers.empty())
    throw std::invalid_argument("config: unknown keys: " + leftovers);
}

DensityPreset density_preset_from(const std::string& name) {
  if (name == "constant") return DensityPreset::constant;
  if (name == "cosine") return DensityPreset::cosine;
  if (name == "random_smooth") return DensityPreset::random_smooth;
  if (name == "tabulated") return DensityPreset::tabulated;
  throw std::invalid_argument("density.preset: unknown preset '" + name +
                              "' (expected constant, cosine, random_smooth, tabulated)");
}

MomentumPreset momentum_preset_from(const std::string& name) {
  if (name == "rest") return MomentumPreset::rest;
  if (name == "single_mode") return MomentumPreset::single_mode;
  if (name == "random_modes") return MomentumPreset::random_modes;
  throw std::invalid_argument("momentum.preset: unknown preset '" + name +
                              "' (expected rest, single_mode, random_modes)");
}

std::string to_string(DensityPreset preset) {
  switch (preset) {
    case DensityPreset::constant: return "constant";
    case DensityPreset::cosine: return "cosine";
    case DensityPreset::random_smooth: return "random_smooth";
    case DensityPreset::tabulated: return "tabulated";
  }
  return "?";
}

std::string to_string(MomentumPreset preset) {
  switch (preset) {
    case MomentumPreset::rest: return "rest";
    case MomentumPreset::single_mode: return "single_mode";
    case MomentumPreset::random_modes: return "random_modes";
  }
  return "?";
}

PotentialSpec potential_from_config(const ConfigMap& cfg) {
  PotentialSpec spec;
  const std::string variant = cfg.get_string("potential.variant", "quadratic");
  if (variant == "quadratic") {
    spec.variant = PotentialVariant::quadratic;
  } else if (variant == "power_law") {
    spec.variant = PotentialVariant::power_law;
  } else if (variant == "custom") {
    spec.variant = PotentialVariant::custom;
  } else {
    throw std::invalid_argument("potential.variant: unknown variant '" + variant +
                                "' (expected quadratic, power_law, custom)");
  }
  spec.mu = cfg.get_real("potential.mu", spec.mu);
  spec.bulk = cfg.get_real("potential.bulk", spec.bulk);
  spec.q = cfg.get_real("potential.q", spec.q);
  spec.knots = cfg.get_reals("potential.knots");
  spec.values = cfg.get_reals("potential.values");
  return spec;
}

Scenario Scenario::from_config(const ConfigMap& cfg) {
  Scenario sc;
  sc.dim = static_cast<int>(cfg.get_int("scenario.dimension", sc.dim));
  sc.grid_cells = static_cast<int>(cfg.get_int("scenario.grid_cells", sc.grid_cells));
  sc.modes = static_cast<int>(cfg.get_int("scenario.modes", sc.modes));
  sc.seed = cfg.get_u64("scenario.seed", sc.seed);
  sc.t_final = cfg.get_real("scenario.t_final", sc.t_final);
  sc.node_dt = cfg.get_real("scenario.node_dt", sc.node_dt);
  sc.output_every = static_cast<int>(cfg.get_int("scenario.output_every", sc.output_every));

  sc.density_preset = density_preset_from(cfg.get_string("density.preset", "constant"));
  sc.density_base = cfg.get_real("density.base", sc.density_base);
  sc.density_amplitude = cfg.get_real("density.amplitude", sc.density_amplitude);
  sc.density_waves = static_cast<int>(cfg.get_int("density.waves", sc.density_waves));
  sc.density_values = cfg.get_reals("density.values");

  sc.momentum_preset = momentum_preset_from(cfg.get_string("momentum.preset", "rest"));
  sc.momentum_amplitude = cfg.get_real("momentum.amplitude", sc.momentum_amplitude);
  sc.momentum_waves = static_cast<int>(cfg.get_int("momentum.waves", sc.momentum_waves));

  sc.pressure_coeff = cfg.get_real("physics.pressure_coeff", sc.pressure_coeff);
  sc.eps = cfg.get_real("physics.eps", sc.eps);
  sc.delta = cfg.get_real("physics.delta", sc.delta);

  sc.potential = potential_from_config(cfg);

  sc.controls.window_nodes =
      static_cast<int>(cfg.get_int("solver.window_nodes", sc.controls.window_nodes));
  sc.controls.window_cap_factor =
      cfg.get_real("solver.window_cap_factor", sc.controls.window_cap_factor);
  sc.controls.picard_tol = cfg.get_real("solver.picard_tol", sc.controls.picard_tol);
  sc.controls.picard_max_iter =
      static_cast<int>(cfg.get_int("solver.picard_max_iter", sc.controls.picard_max_iter));
  sc.controls.window_max_halvings = static_cast<int>(
      cfg.get_int("solver.window_max_halvings", sc.controls.window_max_halvings));
  sc.controls.substeps_per_node =
      static_cast<int>(cfg.get_int("solver.substeps_per_node", sc.controls.substeps_per_node));
  sc.controls.stiffness_target =
      cfg.get_real("solver.stiffness_target", sc.controls.stiffness_target);
  sc.c_audit = cfg.get_real("solver.c_audit", sc.c_audit);

  sc.validate();
  return sc;
}

void Scenario::validate() const {
  if (dim != 1 && dim != 2)
    throw std::invalid_argument("scenario.dimension: must be 1 or 2");
  if (grid_cells < 4)
    throw std::invalid_argument("scenario.grid_cells: need at least 4 cells per axis");
  const int grid_cap = dim == 1 ? 4096 : 256;
  if (grid_cells > grid_cap)
    throw std::invalid_argument("scenario.grid_cells: desk scale caps the grid at " +
                                std::to_string(grid_cap) + " cells per axis");
  if (modes < 1 || modes > 64)
    throw std::invalid_argument("scenario.modes: must be between 1 and 64");
  if (!(t_final > 0) || !std::isfinite(t_final))
    throw std::invalid_argument("scenario.t_final: must be > 0");
  if (!(node_dt > 0) || !std::isfinite(node_dt))
    throw std::invalid_argument("scenario.node_dt: must be > 0");
  if (node_dt > t_final)
    throw std::invalid_argument("scenario.node_dt: must not exceed scenario.t_final");
  if (output_every < 1)
    throw std::invalid_argument("scenario.output_every: must be >= 1");
  if (requested_intervals() % output_every != 0)
    throw std::invalid_argument(
        "scenario.output_every: must divide the node interval count " +
        std::to_string(requested_intervals()));

  if (!std::isfinite(density_base) || !std::isfinite(density_amplitude))
    throw std::invalid_argument("density.base/amplitude: must be finite");
  if (density_amplitude < 0)
    throw std::invalid_argument("density.amplitude: must be >= 0");
  if (density_waves < 1 || density_waves > 16)
    throw std::invalid_argument("density.waves: must be between 1 and 16");
  switch (density_preset) {
    case DensityPreset::constant:
      if (!(density_base > 0))
        throw std::invalid_argument("density.base: must be > 0");
      break;
    case DensityPreset::cosine:
    case DensityPreset::random_smooth:
      if (!(density_base > 0))
        throw std::invalid_argument("density.base: must be > 0");
      if (!(density_amplitude < density_base))
        throw std::invalid_argument(
            "density.amplitude: must stay below density.base so the initial state is positive");
      break;
    case DensityPreset::tabulated: {
      long long expected = grid_cells;
      if (dim == 2) expected *= grid_cells;
      if (static_cast<long long>(density_values.size()) != expected)
        throw std::invalid_argument("density.values: need exactly " + std::to_string(expected) +
                                    " entries, one per grid cell");
      for (const real_t v : density_values)
        if (!std::isfinite(v) || !(v > 0))
          throw std::invalid_argument("density.values: entries must be finite and > 0");
      break;
    }
  }

  if (!std::isfinite(momentum_amplitude) || momentum_amplitude < 0)
    throw std::invalid_argument("momentum.amplitude: must be finite and >= 0");
  if (momentum_waves < 1 || momentum_waves > 16)
    throw std::invalid_argument("momentum.waves: must be between 1 and 16");

  if (!(pressure_coeff > 0) || !std::isfinite(pressure_coeff))
    throw std::invalid_argument("physics.pressure_coeff: must be > 0");
  if (!(eps >= 0) || !std::isfinite(eps))
    throw std::invalid_argument("physics.eps: must be >= 0");
  if (!(delta > 0) || !std::isfinite(delta))
    throw std::invalid_argument("physics.delta: must be > 0");

  potential.validate();  // names its own fields with the same section prefix

  if (!(controls.picard_tol > 0))
    throw std::invalid_argument("solver.picard_tol: must be > 0");
  if (controls.picard_max_iter < 1)
    throw std::invalid_argument("solver.picard_max_iter: must be >= 1");
  if (controls.window_nodes < 1)
    throw std::invalid_argument("solver.window_nodes: must be >= 1");
  if (!(controls.window_cap_factor > 0))
    throw std::invalid_argument("solver.window_cap_factor: must be > 0");
  if (controls.window_max_halvings < 0)
    throw std::invalid_argument("solver.window_max_halvings: must be >= 0");
  if (controls.substeps_per_node < 0)
    throw std::invalid_argument("solver.substeps_per_node: must be >= 0 (0 = automatic)");
  if (!(controls.stiffness_target > 0))
    throw std::invalid_argument("solver.stiffness_target: must be > 0");
  if (!(c_audit > 0))
    throw std::invalid_argument("solver.c_audit: must be > 0");
}

Eigen::VectorXd mollify_initial_density(const Eigen::VectorXd& rho, int modes) {
  if (rho.size() == 0) throw std::invalid_argument("mollify: empty density");
  if (modes < 1) throw std::invalid_argument("mollify: mode count must be >= 1");
  const real_t lo = real_t(1) / modes;
  const real_t hi = real_t(modes);
  const real_t mass_before = rho.sum();
  if (!(mass_before > 0))
    throw std::invalid_argument("mollify: initial density must carry positive mass");
  Eigen::VectorXd clamped = rho.cwiseMax(lo).cwiseMin(hi);
  const real_t mass_after = clamped.sum();
  return clamped * (mass_before / mass_after);
}

SweepPlan sweep_plan_from_config(const ConfigMap& cfg) {
  SweepPlan plan;
  plan.deltas = cfg.get_reals("sweep.deltas");
  plan.epsilons = cfg.get_reals("sweep.epsilons");
  plan.modes = cfg.get_ints("sweep.modes");
  if (plan.epsilons.empty())
    throw std::invalid_argument("sweep.epsilons: must list at least one value");
  if (plan.deltas.empty())
    throw std::invalid_argument("sweep.deltas: must list at least one value");
  if (plan.modes.empty())
    throw std::invalid_argument("sweep.modes: must list at least one value");
  plan.fine_factor = static_cast<int>(cfg.get_int("sweep.fine_factor", plan.fine_factor));
  plan.tail_levels = cfg.get_reals("sweep.tail_levels", plan.tail_levels);
  plan.c_audit = cfg.get_real("sweep.c_audit", plan.c_audit);
  return plan;
}

}  // namespace galflow
