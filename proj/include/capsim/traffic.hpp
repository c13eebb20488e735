#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capsim/geometry.hpp"
#include "capsim/interference.hpp"
#include "capsim/topology.hpp"

namespace capsim {

enum class FlowKind { Unicast, Multicast, FullMeshMember };

struct FlowSpec {
  NodeId src = 0;
  std::vector<NodeId> dsts;  // sorted, non-empty, src excluded
  FlowKind kind = FlowKind::Unicast;

  NodeId dst() const { return dsts.front(); }

  void validate() const {
    if (dsts.empty()) throw std::invalid_argument("FlowSpec: empty destination set");
    if (kind == FlowKind::Unicast && dsts.size() != 1)
      throw std::invalid_argument("FlowSpec: unicast requires exactly one destination");
    for (NodeId d : dsts)
      if (d == src) throw std::invalid_argument("FlowSpec: src in destination set");
  }
};

// One flow per node; destination uniform over the other n-1 nodes.
inline std::vector<FlowSpec> gen_unicast_pairs(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_unicast_pairs: need n >= 2");
  Rng rng(seed);
  std::vector<FlowSpec> flows;
  flows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = static_cast<NodeId>(rng.uniform_below(n - 1));
    if (d >= i) ++d;
    flows.push_back({static_cast<NodeId>(i), {d}, FlowKind::Unicast});
  }
  return flows;
}

// Every node streams to every other node.
inline std::vector<FlowSpec> gen_full_mesh(std::size_t n) {
  if (n < 2) throw std::invalid_argument("gen_full_mesh: need n >= 2");
  std::vector<FlowSpec> flows;
  flows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FlowSpec f;
    f.src = static_cast<NodeId>(i);
    f.kind = FlowKind::FullMeshMember;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) f.dsts.push_back(static_cast<NodeId>(j));
    flows.push_back(std::move(f));
  }
  return flows;
}

struct MulticastGroup {
  NodeId src = 0;
  std::vector<NodeId> dsts;  // deduplicated, src excluded, sorted
  std::size_t l = 0;         // nominal group size
};

// Per source: l-1 uniform points mapped to their nearest nodes, source
// excluded, duplicates merged. Group sizes may shrink below l-1.
inline std::vector<MulticastGroup> gen_multicast_groups(const Placement& placement,
                                                        std::size_t l, std::uint64_t seed) {
  const std::size_t n = placement.size();
  if (l < 2) throw std::invalid_argument("gen_multicast_groups: need l >= 2");
  if (l > n) throw std::invalid_argument("gen_multicast_groups: need l <= n");
  Rng rng(seed);
  std::vector<MulticastGroup> groups;
  groups.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MulticastGroup g;
    g.src = static_cast<NodeId>(i);
    g.l = l;
    for (std::size_t k = 0; k + 1 < l; ++k) {
      const Point p{rng.uniform01(), rng.uniform01()};
      const NodeId d = nearest_node(p, placement);
      if (d != g.src) g.dsts.push_back(d);
    }
    std::sort(g.dsts.begin(), g.dsts.end());
    g.dsts.erase(std::unique(g.dsts.begin(), g.dsts.end()), g.dsts.end());
    groups.push_back(std::move(g));
  }
  return groups;
}

struct Route {
  enum class HopKind : std::uint8_t { Wireless, Backbone };
  struct Hop {
    NodeId tx = 0;
    NodeId rx = 0;
    HopKind kind = HopKind::Wireless;
  };
  std::vector<Hop> hops;

  std::size_t wireless_hops() const {
    std::size_t c = 0;
    for (const auto& h : hops) c += (h.kind == HopKind::Wireless);
    return c;
  }
  std::size_t backbone_hops() const { return hops.size() - wireless_hops(); }
};

namespace detail {
// Shortest path src->dst from a BFS hop field rooted at src.
// Walks backwards choosing the lowest-index predecessor (deterministic).
inline std::vector<NodeId> walk_back(const RangeGraph& g, std::span<const std::uint32_t> hops,
                                     NodeId src, NodeId dst) {
  std::vector<NodeId> rev{dst};
  NodeId cur = dst;
  while (cur != src) {
    const std::uint32_t h = hops[cur];
    NodeId pred = kNoNode;
    for (NodeId v : g.adj(cur)) {
      if (hops[v] == h - 1) {
        pred = v;
        break;  // adjacency sorted -> lowest index
      }
    }
    rev.push_back(pred);
    cur = pred;
  }
  std::reverse(rev.begin(), rev.end());
  return rev;
}
}  // namespace detail

// BFS shortest path for a unicast flow on a static graph.
inline Route route_static(const RangeGraph& graph, const FlowSpec& flow) {
  flow.validate();
  if (flow.kind != FlowKind::Unicast)
    throw std::invalid_argument("route_static: unicast flows only");
  std::vector<std::uint32_t> hops;
  bfs_all(graph, flow.src, hops);
  const NodeId dst = flow.dst();
  if (hops[dst] == UINT32_MAX)
    throw std::runtime_error("route_static: flow " + std::to_string(flow.src) + "->" +
                             std::to_string(dst) + " unreachable");
  const auto path = detail::walk_back(graph, hops, flow.src, dst);
  Route r;
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    r.hops.push_back({path[i], path[i + 1], Route::HopKind::Wireless});
  return r;
}

inline constexpr double kDefaultCoverageConstant = 0.38490017945975052;  // 2/(3*sqrt(3))

// Multicast transmission count: sum of ceil(edge/r) over the Euclidean MST
// of {src} ∪ dsts, capped at ceil(kappa_cov/r^2) — the count needed to cover
// the whole square once destinations are dense enough. Hop counts charge
// ceil(edge/r) per tree edge, treating relay density as sufficient. Callers
// that want the group-connectivity precondition enforced pass the range
// graph's per-node component ids; groups spanning components are rejected.
inline std::uint64_t route_multicast(const Placement& placement, const RadioModel& radio,
                                     const MulticastGroup& group,
                                     double kappa_cov = kDefaultCoverageConstant,
                                     const std::vector<std::uint32_t>* components = nullptr) {
  if (group.dsts.empty())
    throw std::invalid_argument("route_multicast: empty multicast group");
  if (components)
    for (NodeId d : group.dsts)
      if ((*components)[d] != (*components)[group.src])
        throw std::runtime_error("route_multicast: group of source " +
                                 std::to_string(group.src) + " not connected under r");
  const auto cap =
      static_cast<std::uint64_t>(std::ceil(kappa_cov / (radio.r * radio.r)));
  // Every MST edge costs at least one transmission.
  if (group.dsts.size() >= cap) return cap;

  std::vector<Point> members;
  members.reserve(group.dsts.size() + 1);
  members.push_back(placement.points[group.src]);
  for (NodeId d : group.dsts) members.push_back(placement.points[d]);
  const EuclideanTree tree = euclidean_mst(std::span<const Point>(members));
  std::uint64_t t_tree = 0;
  for (const auto& e : tree.edges)
    t_tree += static_cast<std::uint64_t>(std::ceil(e.length / radio.r));
  return std::min<std::uint64_t>(t_tree, cap);
}

// Infrastructure overlay: M relay-only nodes on a lattice, joined by a
// zero-cost backbone. Rectangular rows x cols lattice so any M works.
struct HybridConfig {
  std::size_t M = 0;
  std::vector<Point> infra_points;
  double infra_range = 0.0;

  void validate() const {
    if (M < 1) throw std::invalid_argument("HybridConfig: M must be >= 1");
    if (infra_points.size() != M)
      throw std::invalid_argument("HybridConfig: infra placement size mismatch");
  }
};

inline std::vector<Point> infra_grid(std::size_t M) {
  if (M < 1) throw std::invalid_argument("infra_grid: M must be >= 1");
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(M)));
  while (rows > 1 && M % rows != 0) --rows;
  const std::size_t cols = M / rows;
  std::vector<Point> pts;
  pts.reserve(M);
  for (std::size_t ix = 0; ix < cols; ++ix)
    for (std::size_t iy = 0; iy < rows; ++iy)
      pts.push_back({(static_cast<double>(ix) + 0.5) / static_cast<double>(cols),
                     (static_cast<double>(iy) + 0.5) / static_cast<double>(rows)});
  return pts;
}

inline HybridConfig make_hybrid_config(std::size_t M, double infra_range) {
  HybridConfig h;
  h.M = M;
  h.infra_points = infra_grid(M);
  h.infra_range = infra_range;
  return h;
}

// Route selection in a hybrid network. `graph` spans ordinary nodes
// [0, n_ordinary) plus infra nodes [n_ordinary, n_ordinary+M). Compares the
// direct multi-hop path with src -> hop-nearest infra -> backbone ->
// hop-nearest infra of dst -> dst and returns the one with fewer wireless
// hops, ties favoring direct. The backbone segment costs no wireless hops.
inline Route hybrid_route(const RangeGraph& graph, std::size_t n_ordinary,
                          const HybridConfig& infra, const FlowSpec& flow) {
  flow.validate();
  infra.validate();
  if (graph.n != n_ordinary + infra.M)
    throw std::invalid_argument("hybrid_route: graph/infra size mismatch");
  const NodeId dst = flow.dst();

  std::vector<std::uint32_t> from_src, from_dst;
  bfs_all(graph, flow.src, from_src);
  bfs_all(graph, dst, from_dst);

  const std::uint32_t direct = from_src[dst];

  auto nearest_infra = [&](const std::vector<std::uint32_t>& hops) -> NodeId {
    NodeId best = kNoNode;
    std::uint32_t bh = UINT32_MAX;
    for (std::size_t k = 0; k < infra.M; ++k) {
      const auto id = static_cast<NodeId>(n_ordinary + k);
      if (hops[id] < bh) {
        bh = hops[id];
        best = id;
      }
    }
    return best;
  };
  const NodeId a = nearest_infra(from_src);
  const NodeId b = nearest_infra(from_dst);
  const bool infra_ok = a != kNoNode && b != kNoNode;
  const std::uint64_t via_infra =
      infra_ok ? static_cast<std::uint64_t>(from_src[a]) + from_dst[b] : UINT64_MAX;

  if (direct == UINT32_MAX && !infra_ok)
    throw std::runtime_error("hybrid_route: flow " + std::to_string(flow.src) + "->" +
                             std::to_string(dst) + " has no route");

  Route r;
  if (direct != UINT32_MAX && direct <= via_infra) {
    const auto path = detail::walk_back(graph, from_src, flow.src, dst);
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      r.hops.push_back({path[i], path[i + 1], Route::HopKind::Wireless});
    return r;
  }
  const auto up = detail::walk_back(graph, from_src, flow.src, a);
  for (std::size_t i = 0; i + 1 < up.size(); ++i)
    r.hops.push_back({up[i], up[i + 1], Route::HopKind::Wireless});
  if (a != b) r.hops.push_back({a, b, Route::HopKind::Backbone});
  auto down = detail::walk_back(graph, from_dst, dst, b);  // dst -> b, reversed below
  std::reverse(down.begin(), down.end());
  for (std::size_t i = 0; i + 1 < down.size(); ++i)
    r.hops.push_back({down[i], down[i + 1], Route::HopKind::Wireless});
  return r;
}

// First-stage two-hop relay step: the candidate link from a source to its
// current nearest neighbor, valid only within the delivery radius r_m.
inline std::optional<Link> nearest_neighbor_link(std::span<const Point> pts,
                                                 const PointGrid& grid, NodeId src,
                                                 double r_m) {
  const NodeId nn = grid.nearest(pts[src], src);
  if (nn == kNoNode) return std::nullopt;
  const double d = dist(pts[src], pts[nn]);
  if (d > r_m) return std::nullopt;
  return Link{src, nn, d};
}

// Flow lists as CSV `src,dst1;dst2;...`.
inline void write_flows_csv(std::ostream& os, std::span<const FlowSpec> flows) {
  os << "src,dsts\n";
  for (const auto& f : flows) {
    os << f.src << ',';
    for (std::size_t i = 0; i < f.dsts.size(); ++i) {
      if (i) os << ';';
      os << f.dsts[i];
    }
    os << '\n';
  }
}

}  // namespace capsim
