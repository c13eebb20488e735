#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "capsim/analysis.hpp"
#include "capsim/engine.hpp"

namespace capsim {

using json = nlohmann::json;

inline Scenario scenario_from_name(const std::string& s) {
  if (s == "static-unicast") return Scenario::StaticUnicast;
  if (s == "mobile-two-hop") return Scenario::MobileTwoHop;
  if (s == "multicast") return Scenario::Multicast;
  if (s == "hybrid") return Scenario::Hybrid;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

// Keys mirror SimConfig field names. Unknown keys are rejected.
inline SimConfig parse_sim_config(const json& j) {
  static const std::set<std::string> known = {
      "scenario",    "n",          "placement_law", "seed",      "r",
      "W",           "C",          "alpha",         "beta",      "multicast_l",
      "kappa_cov",   "M",          "reduced_range", "T",         "warmup",
      "mobility",    "arrival_rate", "window",      "fair_band", "flows",
      "positions",   "eps_q",      "q_max",         "skip_unroutable",
      "record_slot_trace"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  detail::reject_unknown_keys(j, known, "simulation config");

  SimConfig c;
  c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
  c.n = j.at("n").get<std::size_t>();
  if (j.contains("placement_law")) {
    const auto law = j["placement_law"].get<std::string>();
    if (law == "uniform")
      c.placement_law = PlacementLaw::Uniform;
    else if (law == "grid")
      c.placement_law = PlacementLaw::Grid;
    else
      throw std::invalid_argument("placement_law must be 'uniform' or 'grid'");
  }
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("r")) c.r = j["r"].get<double>();
  if (j.contains("W")) c.W = j["W"].get<double>();
  if (j.contains("C")) c.C = j["C"].get<double>();
  if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) c.beta = j["beta"].get<double>();
  if (j.contains("multicast_l")) c.multicast_l = j["multicast_l"].get<std::size_t>();
  if (j.contains("kappa_cov")) c.kappa_cov = j["kappa_cov"].get<double>();
  if (j.contains("M")) c.M = j["M"].get<std::size_t>();
  if (j.contains("reduced_range")) c.reduced_range = j["reduced_range"].get<bool>();
  if (j.contains("T")) c.T = j["T"].get<std::uint64_t>();
  if (j.contains("warmup")) c.warmup = j["warmup"].get<std::uint64_t>();
  if (j.contains("mobility")) {
    const auto m = j["mobility"].get<std::string>();
    if (m == "static")
      c.mobility = MobilityModel::Static;
    else if (m == "iid-reposition")
      c.mobility = MobilityModel::IidReposition;
    else
      throw std::invalid_argument("mobility must be 'static' or 'iid-reposition'");
  }
  if (j.contains("arrival_rate")) {
    const auto& a = j["arrival_rate"];
    if (a.is_string()) {
      if (a.get<std::string>() != "saturated")
        throw std::invalid_argument("arrival_rate must be a number or \"saturated\"");
    } else {
      c.arrival_rate = a.get<double>();
    }
  }
  if (j.contains("window")) c.window = j["window"].get<std::uint32_t>();
  if (j.contains("fair_band")) c.fair_band = j["fair_band"].get<std::uint32_t>();
  if (j.contains("flows")) {
    std::vector<FlowSpec> flows;
    for (const auto& row : j["flows"]) {
      if (!row.is_array() || row.size() < 2)
        throw std::invalid_argument("flows entries must be [src, dst, ...]");
      FlowSpec f;
      f.src = row[0].get<NodeId>();
      for (std::size_t i = 1; i < row.size(); ++i) f.dsts.push_back(row[i].get<NodeId>());
      std::sort(f.dsts.begin(), f.dsts.end());
      f.kind = f.dsts.size() == 1 ? FlowKind::Unicast : FlowKind::Multicast;
      f.validate();
      flows.push_back(std::move(f));
    }
    c.flows = std::move(flows);
  }
  if (j.contains("positions")) {
    std::vector<Point> pts;
    for (const auto& row : j["positions"]) {
      if (!row.is_array() || row.size() != 2)
        throw std::invalid_argument("positions entries must be [x, y]");
      pts.push_back({row[0].get<double>(), row[1].get<double>()});
    }
    c.positions = std::move(pts);
  }
  if (j.contains("eps_q")) c.eps_q = j["eps_q"].get<double>();
  if (j.contains("q_max")) c.q_max = j["q_max"].get<double>();
  if (j.contains("skip_unroutable")) c.skip_unroutable = j["skip_unroutable"].get<bool>();
  if (j.contains("record_slot_trace"))
    c.record_slot_trace = j["record_slot_trace"].get<bool>();
  return c;
}

inline SweepSpec parse_sweep_spec(const json& j) {
  static const std::set<std::string> known = {"param",  "values",    "seeds_per_point",
                                              "seed0",  "aggregate", "threads",
                                              "bracket", "base"};
  if (!j.is_object()) throw std::invalid_argument("sweep config must be a JSON object");
  detail::reject_unknown_keys(j, known, "sweep config");

  SweepSpec spec;
  spec.base = parse_sim_config(j.at("base"));
  const auto p = j.at("param").get<std::string>();
  if (p == "n")
    spec.param = SweepParam::N;
  else if (p == "l")
    spec.param = SweepParam::L;
  else if (p == "M")
    spec.param = SweepParam::M;
  else
    throw std::invalid_argument("param must be one of n, l, M");
  for (const auto& v : j.at("values")) spec.values.push_back(v.get<std::uint64_t>());
  if (j.contains("seeds_per_point"))
    spec.seeds_per_point = j["seeds_per_point"].get<std::uint32_t>();
  if (j.contains("seed0")) spec.seed0 = j["seed0"].get<std::uint64_t>();
  if (j.contains("aggregate")) {
    const auto a = j["aggregate"].get<std::string>();
    if (a == "mean")
      spec.aggregate = Aggregate::Mean;
    else if (a == "median")
      spec.aggregate = Aggregate::Median;
    else
      throw std::invalid_argument("aggregate must be 'mean' or 'median'");
  }
  if (j.contains("threads")) spec.threads = j["threads"].get<unsigned>();
  if (j.contains("bracket")) {
    const auto& b = j["bracket"];
    if (!b.is_array() || b.size() != 2)
      throw std::invalid_argument("bracket must be [lo, hi]");
    spec.bracket = std::pair{b[0].get<double>(), b[1].get<double>()};
  }
  spec.validate();
  return spec;
}

inline json metrics_to_json(const MetricsRecord& m) {
  auto num_or_null = [](double v) {
    return std::isnan(v) ? json() : json(v);
  };
  json j;
  j["eta_hat"] = m.eta_hat;
  j["k_hat"] = num_or_null(m.k_hat);
  j["ey_hat"] = m.ey_hat;
  j["lambda_hat"] = m.lambda_hat;
  j["n"] = m.n;
  j["r"] = m.r;
  j["C"] = m.C;
  j["W"] = m.W;
  j["scenario"] = scenario_name(m.scenario);
  j["seed"] = m.seed;
  j["T"] = m.T;
  j["warmup"] = m.warmup;
  j["stable"] = m.stability.stable;
  j["identity_residual"] = num_or_null(m.identity_residual);
  j["y_max"] = m.y_max;
  j["packing_bound"] = m.packing_bound;
  // diagnostics beyond the core schema
  j["flow_count"] = m.flow_count;
  j["excluded_flows"] = m.excluded_flows;
  j["delivered_bits"] = m.delivered_bits;
  j["delivered_hop_sum"] = m.delivered_hop_sum;
  j["max_hops_delivered"] = m.max_hops_delivered;
  j["lambda_min"] = m.lambda_min;
  j["queue_slope_per_sample"] = m.stability.slope_per_sample;
  j["max_queue"] = m.stability.max_queue;
  return j;
}

inline json fit_to_json(const ScenarioReport& rep, const SweepSpec& spec) {
  json j;
  j["metric"] = rep.metric_name;
  j["param"] = sweep_param_name(spec.param);
  j["scenario"] = scenario_name(spec.base.scenario);
  j["slope"] = rep.fit.slope;
  j["intercept"] = rep.fit.intercept;
  j["r_squared"] = rep.fit.r_squared;
  j["theoretical_exponent"] = rep.fit.theoretical_exponent;
  j["bracket"] = {rep.fit.bracket_lo, rep.fit.bracket_hi};
  j["verdict"] = rep.fit.pass ? "pass" : "fail";
  j["excluded_runs"] = rep.excluded_runs;
  json pts = json::array();
  for (const auto& p : rep.points)
    pts.push_back({{"value", p.value},
                   {"metric", p.metric},
                   {"std_error", p.std_error},
                   {"seeds_used", p.seeds_used},
                   {"excluded", p.excluded}});
  j["points"] = pts;
  return j;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;
  return j;
}

}  // namespace capsim
