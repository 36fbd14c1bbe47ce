#pragma once

/// \file io.hpp
/// Deterministic artifact writers.  Every artifact embeds the config hash it
/// was produced from (CSV: leading comment line; JSON: a top-level field), and
/// a plain-text manifest ties the whole output directory to that hash.  No
/// writer consults the clock or any other ambient state, so a fixed scenario
/// reruns to byte-identical files.

#include <string>
#include <vector>

#include <galflow/scenario.hpp>

namespace galflow {

inline constexpr const char* kGalflowVersion = "0.1.0";

/// Locale-independent full-precision rendering (%.17g).
std::string format_real(real_t v);

/// 64-bit FNV-1a of a byte string as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Energy ledger, one row per audited node.
std::string ledger_csv(const EnergyAudit& audit, const std::string& config_hash);

/// Fixed-point window diagnostics, one row per window.
std::string windows_csv(const std::vector<WindowDiagnostics>& windows,
                        const std::string& config_hash);

/// Density envelope checks, one row per checked node.
std::string envelopes_csv(const std::vector<EnvelopeReport>& envelopes,
                          const std::string& config_hash);

/// Density snapshots: cell-center coordinates in the header (2-D centers as
/// "x|y"), then one row per stored node.
std::string density_csv(const Trajectory<1>& traj, const Grid<1>& grid,
                        const std::string& config_hash);
std::string density_csv(const Trajectory<2>& traj, const Grid<2>& grid,
                        const std::string& config_hash);

/// Full trajectory (times, velocity coefficients, density values, momentum
/// integrals) plus the scenario parameters, as pretty-printed JSON.
std::string trajectory_json(const Trajectory<1>& traj, const Grid<1>& grid, const Scenario& sc,
                            const std::string& config_hash);
std::string trajectory_json(const Trajectory<2>& traj, const Grid<2>& grid, const Scenario& sc,
                            const std::string& config_hash);

/// Parameter-study results: one row per ladder rung.
std::string sweep_summary_csv(const SweepReport& report, const std::string& config_hash);

/// Scaling fits across the eps ladder: one row per (delta, n).
std::string sweep_scalings_csv(const SweepReport& report, const std::string& config_hash);

/// Complete parameter-study report as JSON.
std::string sweep_json(const SweepReport& report, const std::string& config_hash);

struct ArtifactEntry {
  std::string name;          ///< file name relative to the output directory
  std::string content_hash;  ///< fnv1a_hex of the file content
};

/// Plain-text run manifest: command, config hash, versions, verdict lines,
/// and the artifact table.
std::string manifest_text(const std::string& command, const std::string& config_hash,
                          const std::vector<std::string>& verdicts,
                          const std::vector<ArtifactEntry>& artifacts);

}  // namespace galflow
