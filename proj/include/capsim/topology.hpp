#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "capsim/geometry.hpp"
#include "capsim/rng.hpp"

namespace capsim {

// Undirected range-limited connectivity graph. Edge (u,v) iff
// Euclidean distance <= r (closed boundary). CSR adjacency, sorted.
struct RangeGraph {
  std::size_t n = 0;
  double r = 0.0;
  std::vector<std::size_t> offsets;  // n+1
  std::vector<NodeId> neighbors;     // sorted per node

  std::span<const NodeId> adj(NodeId u) const {
    return {neighbors.data() + offsets[u], neighbors.data() + offsets[u + 1]};
  }
  std::size_t degree(NodeId u) const { return offsets[u + 1] - offsets[u]; }
};

inline RangeGraph build_range_graph(std::span<const Point> pts, double r) {
  if (r <= 0.0) throw std::invalid_argument("build_range_graph: r must be > 0");
  RangeGraph g;
  g.n = pts.size();
  g.r = r;
  g.offsets.assign(g.n + 1, 0);
  if (g.n == 0) return g;

  PointGrid grid;
  grid.build(pts, r);
  std::vector<std::vector<NodeId>> adj(g.n);
  for (std::size_t u = 0; u < g.n; ++u) {
    grid.for_each_within(pts[u], r, [&](NodeId v) {
      if (v != u) adj[u].push_back(v);
    });
    std::sort(adj[u].begin(), adj[u].end());
  }
  for (std::size_t u = 0; u < g.n; ++u) g.offsets[u + 1] = g.offsets[u] + adj[u].size();
  g.neighbors.reserve(g.offsets[g.n]);
  for (auto& a : adj) g.neighbors.insert(g.neighbors.end(), a.begin(), a.end());
  return g;
}

inline RangeGraph build_range_graph(const Placement& p, double r) {
  return build_range_graph(std::span<const Point>(p.points), r);
}

// Smallest r making the range graph connected = longest EMST edge.
inline double min_connectivity_range(const Placement& p) {
  if (p.size() < 2)
    throw std::invalid_argument("min_connectivity_range: need at least 2 points");
  const EuclideanTree t = euclidean_mst(p);
  double longest = 0.0;
  for (const auto& e : t.edges) longest = std::max(longest, e.length);
  return longest;
}

// Minimum edge count on any src->dst path; nullopt when unreachable.
inline std::optional<std::uint32_t> bfs_hops(const RangeGraph& g, NodeId src, NodeId dst) {
  if (src >= g.n || dst >= g.n) throw std::invalid_argument("bfs_hops: node index out of range");
  if (src == dst) return 0u;
  std::vector<std::uint32_t> hops(g.n, UINT32_MAX);
  std::deque<NodeId> q{src};
  hops[src] = 0;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop_front();
    for (NodeId v : g.adj(u)) {
      if (hops[v] == UINT32_MAX) {
        hops[v] = hops[u] + 1;
        if (v == dst) return hops[v];
        q.push_back(v);
      }
    }
  }
  return std::nullopt;
}

// Full single-source BFS; UINT32_MAX marks unreachable nodes.
inline void bfs_all(const RangeGraph& g, NodeId src, std::vector<std::uint32_t>& hops) {
  hops.assign(g.n, UINT32_MAX);
  std::deque<NodeId> q{src};
  hops[src] = 0;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop_front();
    for (NodeId v : g.adj(u)) {
      if (hops[v] == UINT32_MAX) {
        hops[v] = hops[u] + 1;
        q.push_back(v);
      }
    }
  }
}

struct HopStats {
  double mean_hops = 0.0;
  double excluded_fraction = 0.0;  // unreachable sampled pairs
  std::size_t pairs_sampled = 0;
};

// Mean BFS hop count over uniformly sampled ordered pairs (src != dst).
// Unreachable pairs are excluded and reported. One BFS per distinct source.
inline HopStats avg_hop_count(const RangeGraph& g, std::size_t sample_size, std::uint64_t seed) {
  if (g.n < 2) throw std::invalid_argument("avg_hop_count: need at least 2 nodes");
  Rng rng(seed);
  std::vector<std::vector<NodeId>> dsts_by_src(g.n);
  for (std::size_t k = 0; k < sample_size; ++k) {
    const auto s = static_cast<NodeId>(rng.uniform_below(g.n));
    auto d = static_cast<NodeId>(rng.uniform_below(g.n - 1));
    if (d >= s) ++d;
    dsts_by_src[s].push_back(d);
  }
  std::vector<std::uint32_t> hops;
  std::uint64_t total = 0, reached = 0;
  for (std::size_t s = 0; s < g.n; ++s) {
    if (dsts_by_src[s].empty()) continue;
    bfs_all(g, static_cast<NodeId>(s), hops);
    for (NodeId d : dsts_by_src[s]) {
      if (hops[d] != UINT32_MAX) {
        total += hops[d];
        ++reached;
      }
    }
  }
  if (reached == 0) throw std::runtime_error("avg_hop_count: all sampled pairs unreachable");
  HopStats st;
  st.pairs_sampled = sample_size;
  st.mean_hops = static_cast<double>(total) / static_cast<double>(reached);
  st.excluded_fraction =
      static_cast<double>(sample_size - reached) / static_cast<double>(sample_size);
  return st;
}

// Connected component sizes, largest first.
inline std::vector<std::size_t> giant_component(const RangeGraph& g) {
  std::vector<std::size_t> sizes;
  std::vector<bool> seen(g.n, false);
  std::deque<NodeId> q;
  for (std::size_t s = 0; s < g.n; ++s) {
    if (seen[s]) continue;
    std::size_t count = 0;
    seen[s] = true;
    q.push_back(static_cast<NodeId>(s));
    while (!q.empty()) {
      const NodeId u = q.front();
      q.pop_front();
      ++count;
      for (NodeId v : g.adj(u)) {
        if (!seen[v]) {
          seen[v] = true;
          q.push_back(v);
        }
      }
    }
    sizes.push_back(count);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

// Component id per node (ids are arbitrary but deterministic).
inline std::vector<std::uint32_t> component_ids(const RangeGraph& g) {
  std::vector<std::uint32_t> comp(g.n, UINT32_MAX);
  std::deque<NodeId> q;
  std::uint32_t next = 0;
  for (std::size_t s = 0; s < g.n; ++s) {
    if (comp[s] != UINT32_MAX) continue;
    comp[s] = next;
    q.push_back(static_cast<NodeId>(s));
    while (!q.empty()) {
      const NodeId u = q.front();
      q.pop_front();
      for (NodeId v : g.adj(u)) {
        if (comp[v] == UINT32_MAX) {
          comp[v] = next;
          q.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

// Debug edge-list dump, u < v, CSV `u,v,length`.
inline void write_edge_csv(std::ostream& os, const RangeGraph& g,
                           std::span<const Point> pts) {
  os << "u,v,length\n";
  char buf[96];
  for (std::size_t u = 0; u < g.n; ++u) {
    for (NodeId v : g.adj(static_cast<NodeId>(u))) {
      if (v <= u) continue;
      std::snprintf(buf, sizeof(buf), "%zu,%u,%.17g\n", u, v, dist(pts[u], pts[v]));
      os << buf;
    }
  }
}

}  // namespace capsim
