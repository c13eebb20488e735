#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "capsim/geometry.hpp"

namespace capsim {

// Protocol interference model parameters. The slot duration is 1/W.
struct RadioModel {
  double r = 0.0;  // transmission range
  double W = 1.0;  // link rate, bits per second
  double C = 2.0;  // guard factor, > 1

  void validate() const {
    if (!(r > 0.0)) throw std::invalid_argument("RadioModel: r must be > 0");
    if (!(W > 0.0)) throw std::invalid_argument("RadioModel: W must be > 0");
    if (!(C > 1.0)) throw std::invalid_argument("RadioModel: C must be > 1");
  }
};

// One directed transmission tx -> rx within range.
struct Link {
  NodeId tx = 0;
  NodeId rx = 0;
  double length = 0.0;
};

// A conflict-free set of links active in the same time slot.
struct Slot {
  std::vector<Link> links;
};

// Two links conflict iff they share an endpoint (half-duplex, one link per
// node) or their transmitters are strictly closer than C*r. Separation of
// exactly C*r is allowed.
inline bool conflict(const Link& a, const Link& b, const RadioModel& radio,
                     std::span<const Point> pts) {
  if (a.tx == b.tx || a.tx == b.rx || a.rx == b.tx || a.rx == b.rx) return true;
  const double guard = radio.C * radio.r;
  return dist2(pts[a.tx], pts[b.tx]) < guard * guard;
}

// Area bound on simultaneous transmitters: disjoint disks of radius C*r/2
// centered in the unit square all fit in the square inflated by C*r/2.
inline std::uint64_t packing_upper_bound(const RadioModel& radio) {
  const double g = radio.C * radio.r;
  if (!(g > 0.0)) throw std::invalid_argument("packing_upper_bound: C*r must be > 0");
  const double area = (1.0 + g) * (1.0 + g);
  const double disk = std::numbers::pi * (g / 2.0) * (g / 2.0);
  return static_cast<std::uint64_t>(std::floor(area / disk));
}

// Reusable buffers for greedy_slot. Epoch-stamped so nothing is cleared
// between calls on the hot path.
class GreedyScratch {
 public:
  void prepare(std::size_t n_nodes, double guard) {
    epoch_++;
    if (busy_epoch_.size() < n_nodes) busy_epoch_.assign(n_nodes, 0);
    side_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(1.0 / std::max(guard, 1e-9)));
    side_ = std::min<std::int64_t>(side_, 2048);
    cellw_ = 1.0 / static_cast<double>(side_);
    const std::size_t ncells = static_cast<std::size_t>(side_ * side_);
    if (cell_epoch_.size() < ncells) {
      cell_epoch_.assign(ncells, 0);
      cells_.assign(ncells, {});
    }
  }

  bool busy(NodeId u) const { return busy_epoch_[u] == epoch_; }
  void mark_busy(NodeId u) { busy_epoch_[u] = epoch_; }

  void insert_tx(Point p, NodeId tx) {
    const std::size_t c = cell_of(p);
    if (cell_epoch_[c] != epoch_) {
      cell_epoch_[c] = epoch_;
      cells_[c].clear();
    }
    cells_[c].push_back({p, tx});
  }

  // Any already-accepted transmitter strictly within `guard` of p?
  bool tx_within(Point p, double guard) const {
    const double g2 = guard * guard;
    const std::int64_t reach = static_cast<std::int64_t>(guard / cellw_) + 1;
    const std::int64_t cx = clamp_cell(p.x), cy = clamp_cell(p.y);
    for (std::int64_t gx = std::max<std::int64_t>(0, cx - reach);
         gx <= std::min(side_ - 1, cx + reach); ++gx) {
      for (std::int64_t gy = std::max<std::int64_t>(0, cy - reach);
           gy <= std::min(side_ - 1, cy + reach); ++gy) {
        const std::size_t c = static_cast<std::size_t>(gx * side_ + gy);
        if (cell_epoch_[c] != epoch_) continue;
        for (const auto& e : cells_[c])
          if (dist2(p, e.pos) < g2) return true;
      }
    }
    return false;
  }

 private:
  struct Entry {
    Point pos;
    NodeId tx;
  };
  std::int64_t clamp_cell(double v) const {
    auto c = static_cast<std::int64_t>(v * static_cast<double>(side_));
    return std::clamp<std::int64_t>(c, 0, side_ - 1);
  }
  std::size_t cell_of(Point p) const {
    return static_cast<std::size_t>(clamp_cell(p.x) * side_ + clamp_cell(p.y));
  }

  std::uint64_t epoch_ = 0;
  std::vector<std::uint64_t> busy_epoch_;
  std::int64_t side_ = 1;
  double cellw_ = 1.0;
  std::vector<std::uint64_t> cell_epoch_;
  std::vector<std::vector<Entry>> cells_;
};

// Scans candidates in the given order, accepting each link that does not
// conflict with an already-accepted one. The result is maximal: every
// rejected candidate conflicts with some accepted link. Equivalent to the
// quadratic scan over conflict(); the grid only accelerates the guard check.
inline std::vector<std::size_t> greedy_slot_indices(std::span<const Link> candidates,
                                                    const RadioModel& radio,
                                                    std::span<const Point> pts,
                                                    GreedyScratch& scratch) {
  std::vector<std::size_t> accepted;
  scratch.prepare(pts.size(), radio.C * radio.r);
  const double guard = radio.C * radio.r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Link& cand = candidates[i];
    if (scratch.busy(cand.tx) || scratch.busy(cand.rx)) continue;
    if (scratch.tx_within(pts[cand.tx], guard)) continue;
    scratch.mark_busy(cand.tx);
    scratch.mark_busy(cand.rx);
    scratch.insert_tx(pts[cand.tx], cand.tx);
    accepted.push_back(i);
  }
  return accepted;
}

inline Slot greedy_slot(std::span<const Link> candidates, const RadioModel& radio,
                        std::span<const Point> pts, GreedyScratch& scratch) {
  Slot slot;
  for (std::size_t i : greedy_slot_indices(candidates, radio, pts, scratch))
    slot.links.push_back(candidates[i]);
  return slot;
}

inline Slot greedy_slot(std::span<const Link> candidates, const RadioModel& radio,
                        std::span<const Point> pts) {
  GreedyScratch scratch;
  return greedy_slot(candidates, radio, pts, scratch);
}

}  // namespace capsim
