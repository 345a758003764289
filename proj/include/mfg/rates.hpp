#pragma once

#include "mfg/policy_iteration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfg {

/// Raised when a history is too short to support a rate estimate.
class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values below this are treated as round-off: 100 * eps * scale.
inline double noise_floor(double scale) { return 100.0 * std::numeric_limits<double>::epsilon() * scale; }

struct ContractionEstimate {
  double c_star = std::numeric_limits<double>::quiet_NaN();
  /// iteration indices n of the ratios (e_{n+1} / e_n) that entered the max
  int first = 0;
  int last = 0;
  std::vector<double> ratios;
};

/// Empirical C*: max over the tail window of
/// (du_{n+1} + sigma dm_{n+1}) / du_n. The first ceil(25%) of the iterations
/// and every difference at the noise floor are excluded. `scale` defaults to
/// the largest du in the history.
inline ContractionEstimate contraction_factor(const IterationReport& report, std::optional<double> scale = {}) {
  const auto& rows = report.rows;
  double s = 0.0;
  for (const auto& r : rows)
    if (std::isfinite(r.du_norm)) s = std::max(s, r.du_norm);
  const double floor = noise_floor(scale.value_or(s));
  auto usable = [&](const IterationRecord& r) { return std::isfinite(r.du_norm) && r.du_norm > floor; };
  const int count = static_cast<int>(std::count_if(rows.begin(), rows.end(), usable));
  if (count < 4)
    throw InsufficientData("contraction factor needs >= 4 differences above the floor, have " + std::to_string(count));
  const int skip = static_cast<int>(std::ceil(0.25 * static_cast<double>(rows.size())));
  ContractionEstimate out;
  out.c_star = 0.0;
  for (std::size_t n = static_cast<std::size_t>(skip); n + 1 < rows.size(); ++n) {
    if (!usable(rows[n]) || !usable(rows[n + 1])) continue;
    const double num = rows[n + 1].du_norm + report.sigma * rows[n + 1].dm_norm;
    const double ratio = num / rows[n].du_norm;
    if (out.ratios.empty()) out.first = static_cast<int>(n);
    out.last = static_cast<int>(n);
    out.ratios.push_back(ratio);
    out.c_star = std::max(out.c_star, ratio);
  }
  if (out.ratios.empty()) throw InsufficientData("no consecutive differences above the floor in the tail window");
  return out;
}

struct OrderFit {
  double order = std::numeric_limits<double>::quiet_NaN();
  double constant = std::numeric_limits<double>::quiet_NaN();
  /// index range [first, last] of the points used
  int first = 0;
  int last = 0;
  /// the points above the floor were not monotone; only the longest decreasing suffix was fitted
  bool truncated = false;
};

/// Least squares of log e_{n+1} = p log e_n + log c. Points at or below the
/// noise floor (and NaNs) end the sequence.
inline OrderFit order_fit(const std::vector<double>& e, std::optional<double> scale = {}) {
  double s = 0.0;
  for (double v : e)
    if (std::isfinite(v)) s = std::max(s, v);
  const double floor = noise_floor(scale.value_or(s));
  // leading NaNs (first report row) are skipped; the segment ends at the floor
  std::size_t begin = 0;
  while (begin < e.size() && !std::isfinite(e[begin])) ++begin;
  std::size_t end = begin;
  while (end < e.size() && std::isfinite(e[end]) && e[end] > floor) ++end;
  if (end - begin < 3) throw InsufficientData("order fit needs >= 3 points above the floor");

  std::size_t start = end - 1;
  while (start > begin && e[start - 1] > e[start]) --start;
  OrderFit out;
  out.truncated = start != begin;
  if (end - start < 3) throw InsufficientData("longest decreasing segment has fewer than 3 points");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(end - start - 1);
  for (std::size_t n = start; n + 1 < end; ++n) {
    const double x = std::log(e[n]);
    const double y = std::log(e[n + 1]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = k * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw InsufficientData("order fit is degenerate (constant error sequence)");
  out.order = (k * sxy - sx * sy) / denom;
  out.constant = std::exp((sy - out.order * sx) / k);
  out.first = static_cast<int>(start);
  out.last = static_cast<int>(end - 1);
  return out;
}

struct SweepRow {
  double sigma = 0.0;
  bool converged = false;
  int iterations = 0;
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  std::optional<ContractionEstimate> contraction;
  std::optional<OrderFit> order;
  /// solver or analysis failure; empty when the row is complete
  std::string error;
  IterationReport report;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  /// C* nondecreasing in sigma over the rows that have one
  bool monotone_trend = true;
  /// largest swept sigma with C* < 1 (an observation, not a proven bound)
  std::optional<double> empirical_threshold;
};

/// Worker cap from MFG_THREADS, else the hardware concurrency.
inline unsigned sweep_threads() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MFG_THREADS")) {
    char* endp = nullptr;
    const long v = std::strtol(env, &endp, 10);
    if (endp != env && *endp == '\0' && v >= 1) cap = static_cast<unsigned>(v);
  }
  return cap;
}

/// Runs policy iteration for every sigma (finite horizon or ergodic by the
/// grid) and tabulates the empirical rates. Rows keep the input order; a
/// failing row records its error and the sweep carries on.
template <typename Scalar>
SweepTable sigma_sweep(const RunConfig<Scalar>& base, const std::vector<double>& sigmas,
                       unsigned threads = sweep_threads()) {
  if (sigmas.empty()) throw std::invalid_argument("sigma list is empty");
  for (double s : sigmas)
    if (!(s >= 0.0)) throw std::invalid_argument("sigma values must be >= 0");

  auto run_one = [&base](double sigma) {
    SweepRow row;
    row.sigma = sigma;
    try {
      RunConfig<Scalar> cfg = base;
      cfg.coupling = cfg.coupling.with_sigma(sigma);
      row.report = cfg.ergodic() ? run_ergodic(cfg).report : run_finite_horizon(cfg).report;
      row.converged = row.report.converged;
      row.iterations = static_cast<int>(row.report.rows.size());
      row.final_residual = row.report.final_residual;
    } catch (const std::exception& e) {
      row.error = e.what();
      return row;
    }
    try {
      row.contraction = contraction_factor(row.report);
    } catch (const InsufficientData&) {
    }
    if (sigma == 0.0) {
      std::vector<double> du;
      for (const auto& r : row.report.rows) du.push_back(r.du_norm);
      try {
        row.order = order_fit(du, row.report.du_roundoff_scale);
      } catch (const InsufficientData&) {
      }
    }
    return row;
  };

  SweepTable table;
  table.rows.resize(sigmas.size());
  const std::size_t width = std::max<std::size_t>(1, threads);
  for (std::size_t begin = 0; begin < sigmas.size(); begin += width) {
    std::vector<std::future<SweepRow>> batch;
    const std::size_t end = std::min(sigmas.size(), begin + width);
    for (std::size_t i = begin; i < end; ++i) batch.push_back(std::async(std::launch::async, run_one, sigmas[i]));
    for (std::size_t i = begin; i < end; ++i) table.rows[i] = batch[i - begin].get();
  }

  std::vector<std::pair<double, double>> rated;
  for (const auto& r : table.rows) {
    if (!r.contraction) continue;
    rated.emplace_back(r.sigma, r.contraction->c_star);
    if (r.contraction->c_star < 1.0 && (!table.empirical_threshold || r.sigma > *table.empirical_threshold))
      table.empirical_threshold = r.sigma;
  }
  std::stable_sort(rated.begin(), rated.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rated.size(); ++i)
    if (rated[i].first > rated[i - 1].first && rated[i].second < rated[i - 1].second) table.monotone_trend = false;
  return table;
}

}  // namespace mfg
