#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "capsim/engine.hpp"

namespace capsim {

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;  // natural-log units
  double r_squared = 0.0;
};

// Ordinary least squares on (ln x, ln y).
inline PowerLawFit loglog_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("loglog_fit: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("loglog_fit: need at least 3 points");
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw std::invalid_argument("loglog_fit: values must be positive");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  if (denom <= 0.0) throw std::invalid_argument("loglog_fit: degenerate x values");
  PowerLawFit fit;
  fit.slope = (nn * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / nn;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean_y = sy / nn;
  for (std::size_t i = 0; i < n; ++i) {
    const double ly = std::log(ys[i]);
    const double pred = fit.intercept + fit.slope * std::log(xs[i]);
    ss_res += (ly - pred) * (ly - pred);
    ss_tot += (ly - mean_y) * (ly - mean_y);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

enum class SweepParam { N, L, M };

inline const char* sweep_param_name(SweepParam p) {
  switch (p) {
    case SweepParam::N: return "n";
    case SweepParam::L: return "l";
    case SweepParam::M: return "M";
  }
  return "?";
}

enum class Aggregate { Mean, Median };

struct SweepSpec {
  SimConfig base;                    // fixed parameters
  SweepParam param = SweepParam::N;  // swept parameter
  std::vector<std::uint64_t> values;
  std::uint32_t seeds_per_point = 1;
  std::uint64_t seed0 = 1;  // run j of any value uses seed seed0 + j
  Aggregate aggregate = Aggregate::Mean;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::optional<std::pair<double, double>> bracket;  // slope verdict override

  void validate() const {
    if (values.size() < 3) throw std::invalid_argument("SweepSpec: need >= 3 swept values");
    if (seeds_per_point < 1) throw std::invalid_argument("SweepSpec: need >= 1 seed per point");
  }
};

inline SimConfig config_for(const SweepSpec& spec, std::uint64_t value, std::uint32_t seed_idx) {
  SimConfig c = spec.base;
  switch (spec.param) {
    case SweepParam::N: c.n = value; break;
    case SweepParam::L: c.multicast_l = value; break;
    case SweepParam::M: c.M = value; break;
  }
  c.seed = spec.seed0 + seed_idx;
  return c;
}

struct SweepRow {
  std::uint64_t value = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  MetricsRecord metrics;
};

// One engine run per (value, seed); rows ordered by value then seed
// regardless of execution order. Failed run construction is recorded per
// point and the sweep continues.
inline std::vector<SweepRow> sweep(const SweepSpec& spec) {
  spec.validate();
  struct Job {
    std::uint64_t value;
    std::uint32_t seed_idx;
  };
  std::vector<Job> jobs;
  for (std::uint64_t v : spec.values)
    for (std::uint32_t j = 0; j < spec.seeds_per_point; ++j) jobs.push_back({v, j});

  std::vector<SweepRow> rows(jobs.size());
  auto run_job = [&](std::size_t i) {
    const Job& job = jobs[i];
    SweepRow& row = rows[i];
    row.value = job.value;
    row.seed = spec.seed0 + job.seed_idx;
    try {
      row.metrics = run(config_for(spec, job.value, job.seed_idx));
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  unsigned threads = spec.threads ? spec.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, jobs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
          run_job(i);
      });
    for (auto& th : pool) th.join();
  }
  return rows;
}

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double theoretical_exponent = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool pass = false;
};

struct AggregatedPoint {
  std::uint64_t value = 0;
  double metric = 0.0;      // aggregated over stable seeds
  double std_error = 0.0;
  std::size_t seeds_used = 0;
  std::size_t excluded = 0;  // unstable or failed runs
};

struct ScenarioReport {
  std::string metric_name;
  std::vector<AggregatedPoint> points;
  ScalingFit fit;
  std::size_t excluded_runs = 0;
};

// The fitted metric and theoretical slope per scenario.
inline const char* scenario_metric(Scenario s) {
  switch (s) {
    case Scenario::StaticUnicast:
    case Scenario::MobileTwoHop: return "lambda_hat";
    case Scenario::Multicast:
    case Scenario::Hybrid: return "eta_hat";
  }
  return "?";
}

inline double theoretical_exponent(Scenario s) {
  switch (s) {
    case Scenario::StaticUnicast: return -0.5;
    case Scenario::MobileTwoHop: return 0.0;
    case Scenario::Multicast: return -0.5;
    case Scenario::Hybrid: return 1.0;
  }
  return 0.0;
}

inline std::pair<double, double> default_bracket(Scenario s, PlacementLaw law) {
  switch (s) {
    case Scenario::StaticUnicast:
      return law == PlacementLaw::Grid ? std::pair{-0.60, -0.42} : std::pair{-0.70, -0.40};
    case Scenario::MobileTwoHop: return {-0.15, 0.15};
    case Scenario::Multicast: return {-0.70, -0.35};
    case Scenario::Hybrid: return {0.7, 1.3};
  }
  return {0.0, 0.0};
}

// Aggregates per-value metrics over stable seeds, fits the scenario metric
// against the swept parameter and issues a verdict against the bracket.
inline ScenarioReport scenario_report(std::span<const SweepRow> rows, const SweepSpec& spec) {
  const Scenario scn = spec.base.scenario;
  const std::string metric = scenario_metric(scn);

  std::map<std::uint64_t, std::vector<double>> by_value;
  std::map<std::uint64_t, std::size_t> excluded;
  std::size_t excluded_total = 0;
  for (const auto& row : rows) {
    if (row.failed || !row.metrics.stability.stable) {
      ++excluded[row.value];
      ++excluded_total;
      continue;
    }
    by_value[row.value].push_back(metric == "eta_hat" ? row.metrics.eta_hat
                                                      : row.metrics.lambda_hat);
  }

  ScenarioReport rep;
  rep.metric_name = metric;
  rep.excluded_runs = excluded_total;
  std::vector<double> xs, ys;
  for (auto& [value, samples] : by_value) {
    AggregatedPoint pt;
    pt.value = value;
    pt.seeds_used = samples.size();
    pt.excluded = excluded.count(value) ? excluded[value] : 0;
    std::sort(samples.begin(), samples.end());
    if (spec.aggregate == Aggregate::Median) {
      const std::size_t k = samples.size();
      pt.metric = k % 2 ? samples[k / 2] : 0.5 * (samples[k / 2 - 1] + samples[k / 2]);
    } else {
      double sum = 0;
      for (double v : samples) sum += v;
      pt.metric = sum / static_cast<double>(samples.size());
    }
    if (samples.size() > 1) {
      double var = 0;
      double mean = 0;
      for (double v : samples) mean += v;
      mean /= static_cast<double>(samples.size());
      for (double v : samples) var += (v - mean) * (v - mean);
      var /= static_cast<double>(samples.size() - 1);
      pt.std_error = std::sqrt(var / static_cast<double>(samples.size()));
    }
    rep.points.push_back(pt);
    xs.push_back(static_cast<double>(value));
    ys.push_back(pt.metric);
  }
  if (xs.size() < 3)
    throw std::runtime_error("scenario_report: fewer than 3 stable sweep points");

  const PowerLawFit f = loglog_fit(xs, ys);
  rep.fit.slope = f.slope;
  rep.fit.intercept = f.intercept;
  rep.fit.r_squared = f.r_squared;
  rep.fit.theoretical_exponent = theoretical_exponent(scn);
  const auto [lo, hi] = spec.bracket ? *spec.bracket
                                     : default_bracket(scn, spec.base.placement_law);
  rep.fit.bracket_lo = lo;
  rep.fit.bracket_hi = hi;
  rep.fit.pass = f.slope >= lo && f.slope <= hi;
  return rep;
}

// --- emission ---------------------------------------------------------------

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows,
                            const SweepSpec& spec) {
  os << "scenario,param,value,seed,eta_hat,k_hat,ey_hat,lambda_hat,stable,identity_residual\n";
  char buf[64];
  auto num = [&](double v) -> std::string {
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  };
  for (const auto& row : rows) {
    if (row.failed) continue;
    const auto& m = row.metrics;
    os << scenario_name(spec.base.scenario) << ',' << sweep_param_name(spec.param) << ','
       << row.value << ',' << row.seed << ',' << num(m.eta_hat) << ',' << num(m.k_hat) << ','
       << num(m.ey_hat) << ',' << num(m.lambda_hat) << ',' << (m.stability.stable ? 1 : 0)
       << ',' << num(m.identity_residual) << '\n';
  }
}

// gnuplot-ready columns: log10(param) log10(metric), aggregated points.
inline void write_scaling_dat(std::ostream& os, const ScenarioReport& rep) {
  char buf[96];
  os << "# log10(param) log10(" << rep.metric_name << ")\n";
  for (const auto& pt : rep.points) {
    std::snprintf(buf, sizeof(buf), "%.12g %.12g\n",
                  std::log10(static_cast<double>(pt.value)), std::log10(pt.metric));
    os << buf;
  }
}

inline std::string render_report_table(const ScenarioReport& rep, const SweepSpec& spec) {
  std::ostringstream os;
  os << "scenario " << scenario_name(spec.base.scenario) << ", metric " << rep.metric_name
     << " vs " << sweep_param_name(spec.param) << "\n";
  os << "  value        metric       stderr   seeds  excluded\n";
  char buf[160];
  for (const auto& pt : rep.points) {
    std::snprintf(buf, sizeof(buf), "%7llu  %12.6g  %9.3g  %5zu  %8zu\n",
                  static_cast<unsigned long long>(pt.value), pt.metric, pt.std_error,
                  pt.seeds_used, pt.excluded);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "slope %.4f (theory %.2f, bracket [%.2f, %.2f])  R^2 %.4f  verdict %s\n",
                rep.fit.slope, rep.fit.theoretical_exponent, rep.fit.bracket_lo,
                rep.fit.bracket_hi, rep.fit.r_squared, rep.fit.pass ? "pass" : "FAIL");
  os << buf;
  if (rep.excluded_runs)
    os << "excluded runs (failed or unstable): " << rep.excluded_runs << "\n";
  return os.str();
}

}  // namespace capsim
