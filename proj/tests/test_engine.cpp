#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "capsim/config.hpp"
#include "capsim/engine.hpp"

using namespace capsim;

namespace {

SimConfig chain3_config() {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 3;
  cfg.positions = std::vector<Point>{{0.1, 0.5}, {0.2, 0.5}, {0.3, 0.5}};
  cfg.flows = std::vector<FlowSpec>{{0, {2}, FlowKind::Unicast}};
  cfg.r = 0.12;
  cfg.T = 2000;
  cfg.seed = 5;
  return cfg;
}

SimConfig single_link_config(double W = 1.0) {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 2;
  cfg.positions = std::vector<Point>{{0.4, 0.5}, {0.6, 0.5}};
  cfg.flows = std::vector<FlowSpec>{{0, {1}, FlowKind::Unicast}};
  cfg.r = 0.25;
  cfg.W = W;
  cfg.T = 2000;
  cfg.seed = 3;
  return cfg;
}

void check_conservation(const MetricsRecord& m) {
  CHECK(m.created_total == m.delivered_total + m.in_flight_end);
  // every recorded transmission belongs to a delivered or queued packet
  std::uint64_t y_sum = 0;
  for (auto y : m.y_series) y_sum += y;
  CHECK(y_sum == m.delivered_hop_sum_total + m.in_flight_hops_end);
}

}  // namespace

TEST_CASE("single saturated link measures (W, 1, 1)") {
  const MetricsRecord m = run(single_link_config());
  CHECK(m.eta_hat == 1.0);
  CHECK(m.k_hat == 1.0);
  CHECK(m.ey_hat == 1.0);
  CHECK(m.lambda_hat == 1.0);  // one flow
  CHECK(m.identity_residual == 0.0);
  CHECK(m.max_hops_delivered == 1);
  CHECK(m.stability.stable);
  CHECK(verify_identity(m) == 0.0);
  check_conservation(m);

  const MetricsRecord m2 = run(single_link_config(2.5));
  CHECK(m2.eta_hat == 2.5);
  CHECK(m2.ey_hat == 1.0);
  CHECK(m2.k_hat == 1.0);
}

TEST_CASE("three-node chain measures (W/2, 2, 1)") {
  const MetricsRecord m = run(chain3_config());
  CHECK(m.eta_hat == 0.5);
  CHECK(m.k_hat == 2.0);
  CHECK(m.ey_hat == 1.0);
  CHECK(m.identity_residual == 0.0);
  CHECK(m.max_hops_delivered == 2);
  CHECK(m.stability.stable);
  check_conservation(m);
}

TEST_CASE("zero arrival rate yields an idle network") {
  SimConfig cfg = single_link_config();
  cfg.arrival_rate = 0.0;
  const MetricsRecord m = run(cfg);
  CHECK(m.eta_hat == 0.0);
  for (auto y : m.y_series) CHECK(y == 0);
  CHECK(m.identity_residual == 0.0);
  CHECK(m.stability.stable);
  CHECK(m.stability.slope_per_sample == 0.0);
}

TEST_CASE("overloaded link goes unstable with the deterministic growth rate") {
  SimConfig cfg = single_link_config();
  cfg.arrival_rate = 2.0;  // two packets per slot against a service rate of one
  cfg.T = 2000;
  const MetricsRecord m = run(cfg);
  CHECK_FALSE(m.stability.stable);
  // excess of 1 packet/slot, sampled every T/100 = 20 slots
  CHECK(m.stability.slope_per_sample == Catch::Approx(20.0).epsilon(0.02));
  CHECK_THROWS_WITH(verify_identity(m), Catch::Matchers::ContainsSubstring("unstable"));

  cfg.arrival_rate = 0.5;  // sub-capacity
  const MetricsRecord ok = run(cfg);
  CHECK(ok.stability.stable);
  CHECK(ok.eta_hat == Catch::Approx(0.5).epsilon(0.01));
}

TEST_CASE("runs are deterministic") {
  for (const SimConfig& cfg : {chain3_config(), [] {
         SimConfig c;
         c.scenario = Scenario::MobileTwoHop;
         c.n = 40;
         c.T = 800;
         c.seed = 12;
         return c;
       }()}) {
    const auto a = metrics_to_json(run(cfg)).dump();
    const auto b = metrics_to_json(run(cfg)).dump();
    CHECK(a == b);
  }
}

TEST_CASE("per-slot schedule invariants hold on a random static run") {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 64;
  cfg.T = 400;
  cfg.seed = 21;
  cfg.record_slot_trace = true;
  const MetricsRecord m = run(cfg);
  check_conservation(m);
  CHECK(m.y_max <= m.packing_bound);

  const Placement p = place_uniform(64, mix_seed(21, 1));
  const RadioModel radio{m.r, m.W, m.C};
  std::map<std::uint64_t, std::vector<Link>> by_slot;
  for (const auto& e : m.slot_trace)
    by_slot[e.t].push_back({e.tx, e.rx, dist(p.points[e.tx], p.points[e.rx])});
  for (const auto& [t, links] : by_slot) {
    CHECK(links.size() == m.y_series[t]);
    for (std::size_t i = 0; i < links.size(); ++i) {
      CHECK(links[i].length <= m.r);
      for (std::size_t j = i + 1; j < links.size(); ++j)
        CHECK_FALSE(conflict(links[i], links[j], radio, p.points));
    }
  }
}

TEST_CASE("identity residual is small on a stable random run") {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 128;
  cfg.T = 20000;
  cfg.seed = 2;
  const MetricsRecord m = run(cfg);
  REQUIRE(m.stability.stable);
  CHECK(verify_identity(m) <= 0.05);
  check_conservation(m);
  CHECK(m.y_max <= m.packing_bound);
}

TEST_CASE("mobility_step") {
  std::vector<Point> pts{{0.5, 0.5}, {0.25, 0.25}};
  SECTION("static model keeps positions") {
    const auto next = mobility_step(pts, MobilityModel::Static, 1, 10);
    CHECK(next[0].x == 0.5);
    CHECK(next[1].y == 0.25);
  }
  SECTION("repositioning is deterministic per (seed, t)") {
    const auto a = mobility_step(pts, MobilityModel::IidReposition, 9, 4);
    const auto b = mobility_step(pts, MobilityModel::IidReposition, 9, 4);
    const auto c = mobility_step(pts, MobilityModel::IidReposition, 9, 5);
    CHECK(a[0].x == b[0].x);
    CHECK(a[1].y == b[1].y);
    CHECK(a[0].x != c[0].x);
  }
  SECTION("one node's marginal is uniform (chi-square, 10x10 grid, 1%)") {
    // critical value for 99 degrees of freedom at the 1% level
    const double kChi2Crit = 134.6416168558;
    const int steps = 10000;
    std::vector<int> cells(100, 0);
    std::vector<Point> one(1);
    for (int t = 0; t < steps; ++t) {
      iid_positions(77, static_cast<std::uint64_t>(t), std::span<Point>(one));
      const int cx = std::min(9, static_cast<int>(one[0].x * 10.0));
      const int cy = std::min(9, static_cast<int>(one[0].y * 10.0));
      ++cells[cx * 10 + cy];
    }
    const double expect = steps / 100.0;
    double chi2 = 0.0;
    for (int c : cells) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < kChi2Crit);
  }
}

TEST_CASE("mobile two-hop relay caps the hop count at two") {
  SimConfig cfg;
  cfg.scenario = Scenario::MobileTwoHop;
  cfg.n = 128;
  cfg.T = 4000;
  cfg.seed = 4;
  const MetricsRecord m = run(cfg);
  CHECK(m.max_hops_delivered == 2);
  CHECK(m.k_hat >= 1.0);
  CHECK(m.k_hat <= 2.0);
  CHECK(m.y_max <= m.packing_bound);
  CHECK(m.stability.stable);
  check_conservation(m);
  CHECK(m.delivered_bits > 0);
}

TEST_CASE("mobile pair delivers directly with one hop") {
  SimConfig cfg;
  cfg.scenario = Scenario::MobileTwoHop;
  cfg.n = 2;
  cfg.alpha = 1.0;  // r_m = 1/sqrt(2), delivery whenever the pair is close
  cfg.T = 2000;
  cfg.seed = 6;
  cfg.flows = std::vector<FlowSpec>{{0, {1}, FlowKind::Unicast}};
  const MetricsRecord m = run(cfg);
  CHECK(m.delivered_bits > 0);
  CHECK(m.k_hat == 1.0);  // the only neighbor is the destination
  CHECK(m.max_hops_delivered == 1);
}

TEST_CASE("multicast run reuses link activity and the counting model") {
  SimConfig cfg;
  cfg.scenario = Scenario::Multicast;
  cfg.n = 128;
  cfg.multicast_l = 4;
  cfg.T = 4000;
  cfg.seed = 9;
  const MetricsRecord m = run(cfg);

  SimConfig ucfg = cfg;
  ucfg.scenario = Scenario::StaticUnicast;
  const MetricsRecord u = run(ucfg);

  CHECK(m.ey_hat == u.ey_hat);  // same placement, radio and seed
  CHECK(m.identity_residual == 0.0);
  CHECK(m.eta_hat == Catch::Approx(m.ey_hat * m.W / m.k_hat));
  CHECK(m.lambda_hat == Catch::Approx(m.eta_hat / 128.0));

  // k comes from the per-group transmission counts
  const Placement p = place_uniform(128, mix_seed(9, 1));
  const auto groups = gen_multicast_groups(p, 4, mix_seed(9, 4));
  const RadioModel radio{m.r, m.W, m.C};
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.dsts.empty()) continue;
    sum += static_cast<double>(route_multicast(p, radio, g, cfg.kappa_cov));
    ++used;
  }
  CHECK(m.k_hat == Catch::Approx(sum / static_cast<double>(used)));
}

TEST_CASE("hybrid run with a backbone stays consistent") {
  SimConfig cfg;
  cfg.scenario = Scenario::Hybrid;
  cfg.n = 64;
  cfg.M = 4;
  cfg.reduced_range = true;
  cfg.T = 4000;
  cfg.seed = 13;
  cfg.skip_unroutable = true;
  const MetricsRecord m = run(cfg);
  CHECK(m.r == Catch::Approx(1.0 / 2.0));  // beta/sqrt(M) with beta = 1
  CHECK(m.delivered_bits > 0);
  CHECK(m.y_max <= m.packing_bound);
  CHECK(m.stability.stable);
  check_conservation(m);
  CHECK(verify_identity(m) <= 0.05);
}

TEST_CASE("unroutable flows: throw by default, excluded on request") {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 4;
  cfg.positions = std::vector<Point>{{0.1, 0.1}, {0.15, 0.1}, {0.9, 0.9}, {0.85, 0.9}};
  cfg.flows = std::vector<FlowSpec>{{0, {1}, FlowKind::Unicast}, {0, {2}, FlowKind::Unicast}};
  cfg.r = 0.1;
  cfg.T = 200;
  CHECK_THROWS_AS(run(cfg), std::runtime_error);
  cfg.skip_unroutable = true;
  const MetricsRecord m = run(cfg);
  CHECK(m.excluded_flows == 1);
  CHECK(m.delivered_bits > 0);
}

TEST_CASE("config resolution") {
  SimConfig cfg;
  cfg.scenario = Scenario::StaticUnicast;
  cfg.n = 100;
  SECTION("default static range follows sqrt(2 log n / n)") {
    const auto rc = resolve(cfg);
    CHECK(rc.radio.r == Catch::Approx(std::sqrt(2.0 * std::log(100.0) / 100.0)));
    CHECK(rc.warmup == cfg.T / 5);
  }
  SECTION("warmup must precede the horizon") {
    cfg.warmup = cfg.T;
    CHECK_THROWS_AS(resolve(cfg), std::invalid_argument);
  }
  SECTION("guard factor must exceed one") {
    cfg.C = 1.0;
    CHECK_THROWS_AS(resolve(cfg), std::invalid_argument);
  }
  SECTION("negative arrival rate rejected") {
    cfg.arrival_rate = -1.0;
    CHECK_THROWS_AS(resolve(cfg), std::invalid_argument);
  }
}

TEST_CASE("measurement operators derive from the raw record") {
  const MetricsRecord m = run(chain3_config());
  CHECK(measure_capacity(m) == m.eta_hat);
  CHECK(measure_k(m) == m.k_hat);
  CHECK(measure_EY(m) == m.ey_hat);
  CHECK(per_pair_throughput(m) == m.lambda_hat);
  CHECK(per_pair_throughput(m, 10) == Catch::Approx(m.eta_hat / 10.0));
  CHECK_THROWS_AS(per_pair_throughput(m, 0), std::invalid_argument);

  MetricsRecord empty = m;
  empty.delivered_bits = 0;
  CHECK_THROWS_AS(measure_k(empty), std::runtime_error);
}

TEST_CASE("metrics JSON carries the full schema") {
  const json j = metrics_to_json(run(single_link_config()));
  for (const char* key :
       {"eta_hat", "k_hat", "ey_hat", "lambda_hat", "n", "r", "C", "W", "scenario", "seed",
        "T", "warmup", "stable", "identity_residual", "y_max", "packing_bound"})
    CHECK(j.contains(key));
  CHECK(j["scenario"] == "static-unicast");
  CHECK(j["stable"] == true);
}

TEST_CASE("config JSON parsing rejects unknown keys and bad values") {
  json j{{"scenario", "static-unicast"}, {"n", 16}};
  CHECK_NOTHROW(parse_sim_config(j));
  j["not_a_key"] = 1;
  CHECK_THROWS_WITH(parse_sim_config(j), Catch::Matchers::ContainsSubstring("not_a_key"));
  j.erase("not_a_key");
  j["scenario"] = "warp-drive";
  CHECK_THROWS_AS(parse_sim_config(j), std::invalid_argument);

  json sat{{"scenario", "mobile-two-hop"}, {"n", 8}, {"arrival_rate", "saturated"}};
  CHECK_FALSE(parse_sim_config(sat).arrival_rate.has_value());
  sat["arrival_rate"] = 3.5;
  CHECK(parse_sim_config(sat).arrival_rate == 3.5);
}
