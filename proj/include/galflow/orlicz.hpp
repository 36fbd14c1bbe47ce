#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Equi-integrability certificates for finite families of grid functions.
///
/// The pipeline: measure tail masses of each member above integer levels,
/// greedily pick integer thresholds C_m that force the tail integrals under
/// 2^-m uniformly over the family, inflate the thresholds geometrically so the
/// induced slope table doubles slowly, and assemble the piecewise-linear
/// convex envelope Phi whose superlinearity certifies the family's uniform
/// integral bound. The same Phi is checked for the doubling property
/// Phi(2t) <= K Phi(t) past a recorded onset t0.

/// Default probe window for integer levels and number of thresholds.
inline constexpr long long kDefaultLevelWindow = 1LL << 20;
inline constexpr int kDefaultThresholdCount = 40;

/// A finite family of sampled functions sharing one uniform cell measure.
/// Member vectors may have different lengths; each represents a function on
/// its own uniform partition of a domain of measure size() * cell_measure.
struct SampleFamily {
  std::vector<Eigen::VectorXd> members;
  real_t cell_measure = 0;

  /// Throws std::invalid_argument unless every member is finite everywhere,
  /// the family is nonempty, and the cell measure is positive.
  void validate() const {
    if (members.empty()) throw std::invalid_argument("sample family: no members");
    if (!(cell_measure > 0)) throw std::invalid_argument("sample family: cell measure must be positive");
    for (const auto& f : members) {
      if (f.size() == 0) throw std::invalid_argument("sample family: empty member");
      if (!f.allFinite()) throw std::invalid_argument("sample family: non-finite sample");
    }
  }
};

namespace detail {

/// Runs fn(i) for i in [0, count) on min(workers, count) threads.
template <class Fn>
void parallel_over(int count, int workers, Fn&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& t : threads) t.join();
}

/// Largest integer level a sample magnitude strictly exceeds: |v| > j holds
/// for integer j iff 1 <= j <= exceed_level(v).
inline long long exceed_level(real_t v) {
  const real_t a = std::abs(v);
  if (!(a > 1)) return 0;
  return static_cast<long long>(std::ceil(a)) - 1;
}

/// Per-member magnitudes sorted descending with prefix sums, so tail
/// integrals over {|f| > C} come from one binary search.
struct SortedTails {
  std::vector<Eigen::VectorXd> magnitudes;  ///< descending per member
  std::vector<Eigen::VectorXd> prefix;      ///< prefix[i] = sum of the i largest
  real_t cell_measure = 0;

  /// sup over members of the integral of |f| over {|f| > level}.
  real_t sup_tail_integral(real_t level) const {
    real_t sup = 0;
    for (size_t n = 0; n < magnitudes.size(); ++n) {
      const auto& mag = magnitudes[n];
      // First index with mag[i] <= level; all before it exceed the level.
      const auto begin = mag.data();
      const auto end = begin + mag.size();
      const auto it = std::lower_bound(begin, end, level,
                                       [](real_t sample, real_t lev) { return sample > lev; });
      const auto count = static_cast<Eigen::Index>(it - begin);
      if (count > 0) sup = std::max(sup, prefix[n][count - 1] * cell_measure);
    }
    return sup;
  }

  real_t max_magnitude() const {
    real_t m = 0;
    for (const auto& mag : magnitudes)
      if (mag.size() > 0) m = std::max(m, mag[0]);
    return m;
  }
};

inline SortedTails sort_tails(const SampleFamily& family, int workers = 0) {
  family.validate();
  SortedTails out;
  out.cell_measure = family.cell_measure;
  const int count = static_cast<int>(family.members.size());
  out.magnitudes.resize(count);
  out.prefix.resize(count);
  parallel_over(count, workers, [&](int n) {
    Eigen::VectorXd mag = family.members[n].cwiseAbs();
    std::sort(mag.data(), mag.data() + mag.size(), std::greater<real_t>());
    Eigen::VectorXd pre(mag.size());
    real_t run = 0;
    for (Eigen::Index i = 0; i < mag.size(); ++i) {
      run += mag[i];
      pre[i] = run;
    }
    out.magnitudes[n] = std::move(mag);
    out.prefix[n] = std::move(pre);
  });
  return out;
}

}  // namespace detail

/// Tail-mass table mu_j(f_n) = measure of {|f_n| > j} for integer levels
/// j = 1..window. Rows are stored only while some member keeps positive mass;
/// the accessor reports exact zeros beyond the stored rows.
struct TailTable {
  long long window = 0;    ///< requested level range
  Eigen::MatrixXd masses;  ///< (stored levels) x (members); masses(j-1, n) = mu_j(f_n)

  real_t operator()(long long level, int member) const {
    if (level < 1) throw std::invalid_argument("tail table: levels start at 1");
    if (member < 0 || member >= masses.cols()) throw std::invalid_argument("tail table: member index");
    if (level > masses.rows()) return 0;
    return masses(static_cast<Eigen::Index>(level - 1), member);
  }

  int members() const { return static_cast<int>(masses.cols()); }
};

/// Measures tail masses of every member over integer levels 1..window.
/// Members are processed in parallel; each pass is a histogram sweep, so the
/// cost is O(cells + stored levels) per member.
inline TailTable tail_masses(const SampleFamily& family, long long window = kDefaultLevelWindow,
                             int workers = 0) {
  family.validate();
  if (window < 1) throw std::invalid_argument("tail_masses: window must be >= 1");
  real_t max_abs = 0;
  for (const auto& f : family.members) max_abs = std::max(max_abs, f.cwiseAbs().maxCoeff());
  const long long needed = detail::exceed_level(max_abs);
  const long long rows = std::min(window, needed);

  TailTable table;
  table.window = window;
  table.masses.resize(static_cast<Eigen::Index>(std::max<long long>(rows, 0)),
                      static_cast<Eigen::Index>(family.members.size()));
  if (rows <= 0) return table;

  detail::parallel_over(static_cast<int>(family.members.size()), workers, [&](int n) {
    // Difference array over levels: sample v adds one count to every level
    // j in [1, exceed_level(v)].
    Eigen::VectorXd diff = Eigen::VectorXd::Zero(rows + 1);
    for (Eigen::Index i = 0; i < family.members[n].size(); ++i) {
      const long long top = std::min(rows, detail::exceed_level(family.members[n][i]));
      if (top >= 1) {
        diff[0] += 1;
        diff[static_cast<Eigen::Index>(top)] -= 1;
      }
    }
    real_t run = 0;
    for (long long j = 0; j < rows; ++j) {
      run += diff[static_cast<Eigen::Index>(j)];
      table.masses(static_cast<Eigen::Index>(j), n) = run * family.cell_measure;
    }
  });
  return table;
}

enum class ThresholdStatus {
  certified,     ///< all requested thresholds found inside the level window
  violation,     ///< tails refused to decay across the window
  undetermined,  ///< tails were still decaying when the window ended
};

struct ThresholdOptions {
  int threshold_count = kDefaultThresholdCount;  ///< thresholds C_1..C_count to select
  real_t target_doubling = 2.0;                  ///< inflate so slope(2m) <= target * slope(m)
};

/// Outcome of the threshold search. On success `thresholds` holds strictly
/// increasing positive integers with sup-tail integral <= 2^-m at C_m, and
/// `doubling_c` the measured slope-doubling constant of the induced slope
/// table (at most the requested target by construction).
struct ThresholdSelection {
  ThresholdStatus status = ThresholdStatus::undetermined;
  std::vector<long long> thresholds;
  real_t doubling_c = 1;

  // Diagnostics, populated when the search stops early.
  int failed_index = 0;       ///< first m whose bound was unreachable
  real_t required_bound = 0;  ///< 2^-m for that m
  real_t window_end_tail = 0; ///< sup-tail integral at the window end
  real_t window_start_tail = 0;
  std::string report;
};

namespace detail {

/// Number of thresholds at or below m (the slope of the envelope past m).
inline long long slope_at(const std::vector<long long>& thresholds, long long m) {
  const auto it = std::upper_bound(thresholds.begin(), thresholds.end(), m);
  return static_cast<long long>(it - thresholds.begin());
}

/// Measured sup over m >= C_1 of slope(2m)/slope(m). The ratio only changes
/// where either slope jumps, so checking around C_k and C_k/2 is exhaustive.
inline real_t measure_doubling(const std::vector<long long>& thresholds) {
  if (thresholds.empty()) return 1;
  std::vector<long long> critical;
  for (const long long c : thresholds) {
    for (const long long m : {c - 1, c, c + 1, (c + 1) / 2 - 1, (c + 1) / 2, (c + 1) / 2 + 1}) {
      if (m >= thresholds.front()) critical.push_back(m);
    }
  }
  real_t sup = 1;
  for (const long long m : critical) {
    const real_t num = static_cast<real_t>(slope_at(thresholds, 2 * m));
    const real_t den = static_cast<real_t>(slope_at(thresholds, m));
    if (den > 0) sup = std::max(sup, num / den);
  }
  return sup;
}

}  // namespace detail

/// Selects integer thresholds forcing the family's tail integrals under the
/// geometric budget 2^-m, greedily minimal in each step, then inflated so
/// consecutive thresholds at least double; doubling keeps the slope table's
/// doubling constant at or below 2 while only shrinking the tails.
///
/// The table fixes the probe window: if the (pre-inflation) minimal threshold
/// for some m lies beyond the window, the search stops and classifies the
/// family by how much the sup-tail decayed across the window — still at half
/// its starting value or more means the concentration persisted (violation);
/// otherwise the window was simply too short to decide (undetermined).
inline ThresholdSelection select_thresholds(const SampleFamily& family, const TailTable& table,
                                            ThresholdOptions opts = {}) {
  family.validate();
  if (table.members() != static_cast<int>(family.members.size()))
    throw std::invalid_argument("select_thresholds: tail table does not match the family");
  if (opts.threshold_count < 1) throw std::invalid_argument("select_thresholds: need at least one threshold");
  if (!(opts.target_doubling >= 1)) throw std::invalid_argument("select_thresholds: doubling target must be >= 1");

  const auto tails = detail::sort_tails(family);
  const long long window = table.window;
  // Beyond every sample magnitude the tails vanish exactly, so the greedy
  // search always terminates at or before this level.
  const long long exhaust = detail::exceed_level(tails.max_magnitude()) + 1;

  ThresholdSelection sel;
  sel.window_start_tail = tails.sup_tail_integral(1);

  for (int m = 1; m <= opts.threshold_count; ++m) {
    const real_t bound = std::ldexp(real_t(1), -m);  // 2^-m
    // Minimal level meeting the budget, ignoring monotonicity constraints:
    // the sup-tail is non-increasing in the level, so bisect on [1, exhaust].
    long long lo = 1, hi = exhaust;
    while (lo < hi) {
      const long long mid = lo + (hi - lo) / 2;
      if (tails.sup_tail_integral(static_cast<real_t>(mid)) <= bound)
        hi = mid;
      else
        lo = mid + 1;
    }
    const long long greedy = lo;

    if (greedy > window) {
      sel.failed_index = m;
      sel.required_bound = bound;
      sel.window_end_tail = tails.sup_tail_integral(static_cast<real_t>(window));
      const bool stuck = sel.window_end_tail >= real_t(0.5) * sel.window_start_tail;
      sel.status = stuck ? ThresholdStatus::violation : ThresholdStatus::undetermined;
      sel.doubling_c = detail::measure_doubling(sel.thresholds);
      sel.report = (stuck ? std::string("equi-integrability violation: ")
                          : std::string("undetermined within the level window: ")) +
                   "tail integral " + std::to_string(sel.window_end_tail) + " at level " +
                   std::to_string(window) + " exceeds the 2^-" + std::to_string(m) +
                   " budget " + std::to_string(bound) +
                   (stuck ? "; tails kept at least half their starting mass "
                          : "; tails were still decaying ") +
                   "(start " + std::to_string(sel.window_start_tail) + ")";
      return sel;
    }

    long long next = greedy;
    if (!sel.thresholds.empty()) {
      next = std::max(next, sel.thresholds.back() + 1);
      // Geometric inflation: larger thresholds only shrink the tails, and
      // ratio >= target keeps at most one threshold in any (m, target*m].
      const real_t inflated = static_cast<real_t>(sel.thresholds.back()) * opts.target_doubling;
      next = std::max(next, static_cast<long long>(std::ceil(inflated)));
    }
    sel.thresholds.push_back(next);
  }

  sel.status = ThresholdStatus::certified;
  sel.doubling_c = detail::measure_doubling(sel.thresholds);
  sel.report = "certified: " + std::to_string(sel.thresholds.size()) +
               " thresholds, measured slope-doubling constant " + std::to_string(sel.doubling_c);
  return sel;
}

/// Piecewise-linear convex envelope generated by a strictly increasing
/// integer threshold table: the slope past level m counts the thresholds at
/// or below m, so
///
///   phi(s) = #{k : C_k < s},   Phi(t) = sum_k max(0, t - C_k).
///
/// phi is non-negative, non-decreasing, vanishes on [0, C_1], and its final
/// slope equals the threshold count (it grows without bound as more
/// thresholds are supplied). Phi is convex with Phi(0) = 0 and breakpoints
/// exactly at the thresholds.
struct YoungFunction {
  std::vector<long long> thresholds;
  real_t doubling_c = 1;  ///< recorded slope-doubling constant

  long long slope(long long m) const { return detail::slope_at(thresholds, m); }

  real_t phi(real_t s) const {
    if (!(s > 0)) return 0;
    // #{k : C_k < s}
    const auto it = std::lower_bound(thresholds.begin(), thresholds.end(), s,
                                     [](long long c, real_t v) { return static_cast<real_t>(c) < v; });
    return static_cast<real_t>(it - thresholds.begin());
  }

  real_t value(real_t t) const {
    if (!(t > 0)) return 0;
    real_t sum = 0;
    for (const long long c : thresholds) {
      const real_t gap = t - static_cast<real_t>(c);
      if (gap <= 0) break;
      sum += gap;
    }
    return sum;
  }
};

/// Builds the envelope from thresholds and verifies its structural
/// identities exhaustively over levels 0..check_to:
///  - slope(m) >= j  iff  C_j <= m, for every threshold index j;
///  - the integral through level j+1 never exceeds the slope prefix sum.
/// A non-positive doubling constant is measured from the table.
inline YoungFunction build_young(std::vector<long long> thresholds, real_t doubling_c = 0,
                                 long long check_to = kDefaultThresholdCount) {
  if (thresholds.empty()) throw std::invalid_argument("build_young: empty threshold table");
  for (size_t k = 0; k < thresholds.size(); ++k) {
    if (thresholds[k] < 1) throw std::invalid_argument("build_young: thresholds must be positive");
    if (k > 0 && thresholds[k] <= thresholds[k - 1])
      throw std::invalid_argument("build_young: thresholds must be strictly increasing");
  }

  YoungFunction young;
  young.thresholds = std::move(thresholds);
  young.doubling_c = doubling_c > 0 ? doubling_c : detail::measure_doubling(young.thresholds);

  real_t slope_prefix = 0;
  for (long long m = 0; m <= check_to; ++m) {
    const long long s = young.slope(m);
    for (size_t j = 1; j <= young.thresholds.size(); ++j) {
      const bool slope_reaches = s >= static_cast<long long>(j);
      const bool threshold_below = young.thresholds[j - 1] <= m;
      if (slope_reaches != threshold_below)
        throw std::logic_error("build_young: slope/threshold index equivalence failed");
    }
    if (m >= 1) {
      slope_prefix += static_cast<real_t>(s);
      if (young.value(static_cast<real_t>(m + 1)) > slope_prefix + 1e-9)
        throw std::logic_error("build_young: envelope exceeded its slope prefix bound");
    }
  }
  return young;
}

/// Result of the doubling verification: Phi(2t) <= K Phi(t) for all t >= t0,
/// with K measured exactly (the ratio is monotone between breakpoints of
/// either numerator or denominator, so scanning breakpoints is exhaustive).
struct Delta2Report {
  bool ok = false;
  real_t K = 0;      ///< measured sup of Phi(2t)/Phi(t) over [t0, infinity)
  real_t t0 = 0;     ///< onset level, the smallest candidate achieving the bound
  real_t bound = 0;  ///< 2 * doubling_c + tolerance
  std::string reason;
};

/// Certifies the doubling property against the recorded slope-doubling
/// constant: searches for the smallest onset t0 (over ratio breakpoints) with
/// sup_{t >= t0} Phi(2t)/Phi(t) <= 2c + tolerance. Beyond the last threshold
/// the envelope is linear, so the ratio decays monotonically to 2 and the
/// scan over breakpoints is exact for the whole half-line.
inline Delta2Report delta2_verify(const YoungFunction& young, real_t tolerance = 1e-9,
                                  real_t t_min = 1) {
  if (young.thresholds.empty()) throw std::invalid_argument("delta2_verify: empty envelope");
  if (!(tolerance >= 0)) throw std::invalid_argument("delta2_verify: tolerance must be >= 0");
  Delta2Report rep;
  rep.bound = 2 * young.doubling_c + tolerance;

  // Breakpoints of t -> Phi(2t)/Phi(t): thresholds (denominator kinks) and
  // half-thresholds (numerator kinks). The ratio is a monotone Moebius piece
  // between consecutive candidates, so its sup lives on the candidate set.
  std::vector<real_t> candidates;
  real_t threshold_sum = 0;
  for (const long long c : young.thresholds) {
    candidates.push_back(static_cast<real_t>(c));
    candidates.push_back(static_cast<real_t>(c) / 2);
    threshold_sum += static_cast<real_t>(c);
  }
  const real_t first_positive = static_cast<real_t>(young.thresholds.front());
  // Past the last threshold both Phi(t) and Phi(2t) are linear, so the ratio
  // decays monotonically toward 2 and crosses the bound at a level computable
  // in closed form; adding that level lets the onset land in the linear tail.
  if (rep.bound > 2) {
    const real_t slope_total = static_cast<real_t>(young.thresholds.size());
    const real_t cross = threshold_sum * (rep.bound - 1) / (slope_total * (rep.bound - 2));
    if (cross > first_positive) candidates.push_back(cross);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::erase_if(candidates, [&](real_t t) { return t <= first_positive || t < t_min; });

  real_t suffix_sup = 2;  // limit value of the ratio at infinity
  real_t best_t0 = 0, best_K = 0, least_K = 2, least_t0 = 0;
  bool found = false, first = true;
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    const real_t t = *it;
    const real_t den = young.value(t);
    if (den <= 0) break;  // only levels with positive envelope certify
    suffix_sup = std::max(suffix_sup, young.value(2 * t) / den);
    if (first) {
      least_K = suffix_sup;  // largest onset gives the smallest achievable sup
      least_t0 = t;
      first = false;
    }
    if (suffix_sup <= rep.bound) {
      best_t0 = t;
      best_K = suffix_sup;
      found = true;
    }
  }

  if (found) {
    rep.ok = true;
    rep.t0 = best_t0;
    rep.K = best_K;
    rep.reason = "doubling certified";
  } else {
    rep.ok = false;
    rep.t0 = least_t0;
    rep.K = least_K;
    rep.reason = "doubling bound " + std::to_string(rep.bound) +
                 " unattained; best achievable sup " + std::to_string(least_K);
  }
  return rep;
}

/// sup over members of the integral of Phi(|f_n|): the uniform bound the
/// threshold construction guarantees to stay at or below 1 (up to one-cell
/// discretization slack).
inline real_t orlicz_bound(const SampleFamily& family, const YoungFunction& young,
                           int workers = 0) {
  family.validate();
  const int count = static_cast<int>(family.members.size());
  std::vector<real_t> integrals(count, 0);
  detail::parallel_over(count, workers, [&](int n) {
    const auto& f = family.members[n];
    real_t sum = 0;
    for (Eigen::Index i = 0; i < f.size(); ++i) sum += young.value(std::abs(f[i]));
    integrals[n] = sum * family.cell_measure;
  });
  return *std::max_element(integrals.begin(), integrals.end());
}

/// sup over members of the tail integral over {|f_n| > level}; the quantity
/// the thresholds control and the converse absolute-continuity check reads.
inline real_t family_tail_integral(const SampleFamily& family, real_t level) {
  return detail::sort_tails(family).sup_tail_integral(level);
}

// --- Preset families and CSV plumbing (non-template translation unit) ---

/// Single-member family sampling 1/sqrt(x) at cell midpoints of [0,1]:
/// integrable with fat tails, mu_j ~ 1/j^2.
SampleFamily family_inverse_sqrt(int n_cells);

/// Members n * indicator([0, 1/n]) with doubling heights n = 1, 2, 4, ...,
/// 2^(count-1) on a shared 2^(count-1)-cell grid over [0,1]: every member
/// carries exactly unit mass above each level below its height, the textbook
/// concentration family. count must lie in [2, 24].
SampleFamily family_spike(int count);

/// Loads a family from CSV, one column per member, one row per cell. A
/// non-positive cell measure defaults to 1/rows (unit total measure).
SampleFamily load_family_csv(const std::string& path, real_t cell_measure = -1);

/// Writes one column per member, full double precision.
void save_family_csv(const SampleFamily& family, const std::string& path);

/// Writes the envelope as "breakpoint,slope_after,value" rows.
void save_young_csv(const YoungFunction& young, const std::string& path);

}  // namespace galflow
