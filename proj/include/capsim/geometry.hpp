#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capsim/rng.hpp"

namespace capsim {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double dist2(Point a, Point b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double dist(Point a, Point b) { return std::sqrt(dist2(a, b)); }

enum class PlacementLaw { Uniform, Grid };

// Node positions on the unit square.
struct Placement {
  std::vector<Point> points;
  PlacementLaw law = PlacementLaw::Uniform;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
};

inline Placement place_uniform(std::size_t n, std::uint64_t seed) {
  Placement p;
  p.law = PlacementLaw::Uniform;
  p.seed = seed;
  p.points.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform01();
    const double y = rng.uniform01();
    p.points.push_back({x, y});
  }
  return p;
}

// Cell-centered sqrt(n) x sqrt(n) lattice, spacing 1/sqrt(n).
// Column-major: x varies slowest.
inline Placement place_grid(std::size_t n) {
  if (n == 0) throw std::invalid_argument("place_grid: n must be >= 1");
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n)
    throw std::invalid_argument("place_grid: n = " + std::to_string(n) +
                                " is not a perfect square");
  Placement p;
  p.law = PlacementLaw::Grid;
  p.seed = 0;
  p.points.reserve(n);
  const double step = 1.0 / static_cast<double>(side);
  for (std::size_t ix = 0; ix < side; ++ix)
    for (std::size_t iy = 0; iy < side; ++iy)
      p.points.push_back({(static_cast<double>(ix) + 0.5) * step,
                          (static_cast<double>(iy) + 0.5) * step});
  return p;
}

struct EuclideanTree {
  struct Edge {
    NodeId a = 0;
    NodeId b = 0;
    double length = 0.0;
  };
  std::vector<Edge> edges;
  double total_length = 0.0;
};

// Prim over the complete Euclidean graph, O(n^2). Fine at desk scale.
inline EuclideanTree euclidean_mst(std::span<const Point> points) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("euclidean_mst: empty point set");
  EuclideanTree tree;
  if (n == 1) return tree;
  tree.edges.reserve(n - 1);

  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<NodeId> parent(n, 0);
  std::vector<bool> in_tree(n, false);
  in_tree[0] = true;
  for (std::size_t v = 1; v < n; ++v) best[v] = dist2(points[0], points[v]);

  for (std::size_t added = 1; added < n; ++added) {
    std::size_t u = n;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v] && best[v] < bd) {
        bd = best[v];
        u = v;
      }
    }
    in_tree[u] = true;
    const double len = std::sqrt(best[u]);
    tree.edges.push_back({parent[u], static_cast<NodeId>(u), len});
    tree.total_length += len;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v]) {
        const double d2 = dist2(points[u], points[v]);
        if (d2 < best[v]) {
          best[v] = d2;
          parent[v] = static_cast<NodeId>(u);
        }
      }
    }
  }
  return tree;
}

inline EuclideanTree euclidean_mst(const Placement& p) {
  return euclidean_mst(std::span<const Point>(p.points));
}

// Index of the point closest to p; ties broken by lowest index.
inline NodeId nearest_node(Point p, std::span<const Point> points) {
  if (points.empty()) throw std::invalid_argument("nearest_node: empty placement");
  NodeId best = 0;
  double bd = dist2(p, points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = dist2(p, points[i]);
    if (d < bd) {
      bd = d;
      best = static_cast<NodeId>(i);
    }
  }
  return best;
}

inline NodeId nearest_node(Point p, const Placement& placement) {
  return nearest_node(p, std::span<const Point>(placement.points));
}

// Mean over nodes of the distance to the nearest *other* node.
inline double mean_nn_distance(const Placement& placement) {
  const std::size_t n = placement.size();
  if (n < 2) throw std::invalid_argument("mean_nn_distance: need at least 2 points");
  const auto& pts = placement.points;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      bd = std::min(bd, dist2(pts[i], pts[j]));
    }
    sum += std::sqrt(bd);
  }
  return sum / static_cast<double>(n);
}

// Uniform bucket grid over [0,1]^2 for radius and nearest queries.
// Rebuildable in place; the engine re-uses one instance across slots.
class PointGrid {
 public:
  PointGrid() = default;

  void build(std::span<const Point> pts, double cell_hint) {
    pts_ = pts;
    side_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(1.0 / std::max(cell_hint, 1e-9)));
    side_ = std::min<std::int64_t>(side_, 4096);
    cellw_ = 1.0 / static_cast<double>(side_);
    const std::size_t ncells = static_cast<std::size_t>(side_ * side_);
    counts_.assign(ncells + 1, 0);
    for (const Point& p : pts) ++counts_[cell_of(p) + 1];
    for (std::size_t c = 1; c <= ncells; ++c) counts_[c] += counts_[c - 1];
    order_.resize(pts.size());
    fill_ = counts_;
    for (std::size_t i = 0; i < pts.size(); ++i)
      order_[fill_[cell_of(pts[i])]++] = static_cast<NodeId>(i);
  }

  // Visits every index whose point lies within `radius` of p (exact check).
  template <typename F>
  void for_each_within(Point p, double radius, F&& fn) const {
    const double r2 = radius * radius;
    const std::int64_t reach = static_cast<std::int64_t>(radius / cellw_) + 1;
    const std::int64_t cx = clamp_cell(p.x), cy = clamp_cell(p.y);
    for (std::int64_t gx = std::max<std::int64_t>(0, cx - reach);
         gx <= std::min(side_ - 1, cx + reach); ++gx) {
      for (std::int64_t gy = std::max<std::int64_t>(0, cy - reach);
           gy <= std::min(side_ - 1, cy + reach); ++gy) {
        const std::size_t c = static_cast<std::size_t>(gx * side_ + gy);
        for (std::size_t k = counts_[c]; k < counts_[c + 1]; ++k) {
          const NodeId idx = order_[k];
          if (dist2(p, pts_[idx]) <= r2) fn(idx);
        }
      }
    }
  }

  // Exact nearest point to p, optionally excluding one index.
  // Expanding ring search; ties broken by lowest index.
  NodeId nearest(Point p, NodeId exclude = kNoNode) const {
    NodeId best = kNoNode;
    double bd = std::numeric_limits<double>::infinity();
    const std::int64_t cx = clamp_cell(p.x), cy = clamp_cell(p.y);
    for (std::int64_t ring = 0; ring < side_; ++ring) {
      if (best != kNoNode) {
        // Points in farther rings are at least (ring-1)*cellw away.
        const double lower = static_cast<double>(ring - 1) * cellw_;
        if (lower > 0.0 && lower * lower > bd) break;
      }
      bool any_cell = false;
      for (std::int64_t gx = cx - ring; gx <= cx + ring; ++gx) {
        if (gx < 0 || gx >= side_) continue;
        for (std::int64_t gy = cy - ring; gy <= cy + ring; ++gy) {
          if (gy < 0 || gy >= side_) continue;
          if (std::max(std::abs(gx - cx), std::abs(gy - cy)) != ring) continue;
          any_cell = true;
          const std::size_t c = static_cast<std::size_t>(gx * side_ + gy);
          for (std::size_t k = counts_[c]; k < counts_[c + 1]; ++k) {
            const NodeId idx = order_[k];
            if (idx == exclude) continue;
            const double d = dist2(p, pts_[idx]);
            if (d < bd || (d == bd && idx < best)) {
              bd = d;
              best = idx;
            }
          }
        }
      }
      if (!any_cell && best != kNoNode) break;
    }
    return best;
  }

 private:
  std::int64_t clamp_cell(double v) const {
    auto c = static_cast<std::int64_t>(v * static_cast<double>(side_));
    return std::clamp<std::int64_t>(c, 0, side_ - 1);
  }
  std::size_t cell_of(Point p) const {
    return static_cast<std::size_t>(clamp_cell(p.x) * side_ + clamp_cell(p.y));
  }

  std::span<const Point> pts_;
  std::int64_t side_ = 1;
  double cellw_ = 1.0;
  std::vector<std::size_t> counts_, fill_;
  std::vector<NodeId> order_;
};

// CSV export: header id,x,y, full round-trip precision.
inline void write_placement_csv(std::ostream& os, const Placement& p) {
  os << "id,x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, p.points[i].x, p.points[i].y);
    os << buf;
  }
}

}  // namespace capsim
