#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <numbers>

#include "capsim/interference.hpp"

using namespace capsim;

namespace {

// Reference implementation: scan in order, test against every accepted link
// with the pairwise conflict predicate.
Slot naive_greedy(std::span<const Link> candidates, const RadioModel& radio,
                  std::span<const Point> pts) {
  Slot slot;
  for (const Link& cand : candidates) {
    bool ok = true;
    for (const Link& acc : slot.links)
      if (conflict(cand, acc, radio, pts)) {
        ok = false;
        break;
      }
    if (ok) slot.links.push_back(cand);
  }
  return slot;
}

struct RandomInstance {
  std::vector<Point> pts;
  std::vector<Link> links;
};

RandomInstance random_instance(Rng& rng, std::size_t n_links, double r) {
  RandomInstance inst;
  for (std::size_t i = 0; i < n_links; ++i) {
    const Point tx{rng.uniform01(), rng.uniform01()};
    const double ang = rng.uniform01() * 2.0 * std::numbers::pi;
    const double len = rng.uniform01() * r;
    Point rx{std::clamp(tx.x + len * std::cos(ang), 0.0, 1.0),
             std::clamp(tx.y + len * std::sin(ang), 0.0, 1.0)};
    inst.pts.push_back(tx);
    inst.pts.push_back(rx);
    inst.links.push_back({static_cast<NodeId>(2 * i), static_cast<NodeId>(2 * i + 1),
                          dist(tx, rx)});
  }
  return inst;
}

}  // namespace

TEST_CASE("conflict rule") {
  const RadioModel radio{0.25, 1.0, 2.0};  // guard C*r = 0.5
  std::vector<Point> pts{{0.25, 0.5}, {0.3, 0.5}, {0.75, 0.5}, {0.8, 0.5},
                         {0.5, 0.5},  {0.26, 0.5}};
  const Link a{0, 1, 0.05};
  const Link b{2, 3, 0.05};   // tx distance exactly 0.5
  const Link c{4, 5, 0.24};   // tx at 0.25 from a's tx
  SECTION("shared endpoints always conflict") {
    CHECK(conflict(a, Link{0, 4, 0.25}, radio, pts));  // shared tx
    CHECK(conflict(a, Link{4, 1, 0.25}, radio, pts));  // a's rx is b's rx
    CHECK(conflict(a, Link{1, 4, 0.25}, radio, pts));  // a's rx transmits
  }
  SECTION("transmitter separation of exactly C*r is allowed") {
    CHECK_FALSE(conflict(a, b, radio, pts));
  }
  SECTION("closer than C*r conflicts") { CHECK(conflict(a, c, radio, pts)); }
  SECTION("well separated links do not conflict") {
    std::vector<Point> far{{0.0, 0.0}, {0.05, 0.0}, {1.0, 1.0}, {0.95, 1.0}};
    CHECK_FALSE(conflict(Link{0, 1, 0.05}, Link{2, 3, 0.05}, radio, far));
  }
}

TEST_CASE("conflict is symmetric") {
  Rng rng(31);
  const RadioModel radio{0.2, 1.0, 2.0};
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng, 2, radio.r);
    CHECK(conflict(inst.links[0], inst.links[1], radio, inst.pts) ==
          conflict(inst.links[1], inst.links[0], radio, inst.pts));
  }
}

TEST_CASE("packing_upper_bound values") {
  CHECK(packing_upper_bound({0.5, 1.0, 2.0}) == 5);    // C*r = 1
  CHECK(packing_upper_bound({1.0, 1.0, 2.0}) == 2);    // C*r = 2
  CHECK(packing_upper_bound({0.25, 1.0, 2.0}) == 11);  // C*r = 0.5
}

TEST_CASE("guard spanning the square allows one active link") {
  // Any two points of the unit square are less than 2 apart (diagonal
  // sqrt(2)), so with C*r = 2 every pair of node-disjoint links conflicts
  // and greedy accepts exactly one. The area bound (2) is valid but loose.
  const RadioModel radio{1.0, 1.0, 2.0};
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 10, radio.r);
    for (std::size_t i = 0; i < inst.links.size(); ++i)
      for (std::size_t j = i + 1; j < inst.links.size(); ++j)
        CHECK(conflict(inst.links[i], inst.links[j], radio, inst.pts));
    const Slot s = greedy_slot(inst.links, radio, inst.pts);
    CHECK(s.links.size() == 1);
  }
}

TEST_CASE("nine transmitters on a 0.5-spaced lattice all fit") {
  // Pairwise transmitter distance >= 0.5 = C*r, so a valid bound must admit
  // 9 simultaneous links; the formula gives 11.
  const RadioModel radio{0.25, 1.0, 2.0};
  std::vector<Point> pts;
  std::vector<Link> links;
  for (int ix = 0; ix < 3; ++ix)
    for (int iy = 0; iy < 3; ++iy) {
      const Point tx{ix * 0.5, iy * 0.5};
      const Point rx{ix * 0.5 + 0.01, iy * 0.5 + 0.01};
      pts.push_back(tx);
      pts.push_back(rx);
      links.push_back({static_cast<NodeId>(pts.size() - 2),
                       static_cast<NodeId>(pts.size() - 1), dist(tx, rx)});
    }
  const Slot s = greedy_slot(links, radio, pts);
  CHECK(s.links.size() == 9);
  CHECK(packing_upper_bound(radio) == 11);
}

TEST_CASE("greedy_slot order contract") {
  const RadioModel radio{0.1, 1.0, 2.0};  // guard 0.2
  SECTION("empty candidates") {
    std::vector<Point> pts;
    std::vector<Link> none;
    CHECK(greedy_slot(none, radio, pts).links.empty());
  }
  SECTION("two mutually conflicting links: first wins") {
    std::vector<Point> pts{{0.5, 0.5}, {0.55, 0.5}, {0.5, 0.55}, {0.45, 0.5}};
    std::vector<Link> links{{0, 1, 0.05}, {2, 3, 0.07}};
    const Slot s = greedy_slot(links, radio, pts);
    REQUIRE(s.links.size() == 1);
    CHECK(s.links[0].tx == 0);
  }
  SECTION("1 conflicts 2, 2 conflicts 3, 1 clear of 3 -> {1, 3}") {
    std::vector<Point> pts{{0.1, 0.5}, {0.12, 0.5},   // link 1
                           {0.25, 0.5}, {0.27, 0.5},  // link 2, 0.15 from 1
                           {0.4, 0.5}, {0.42, 0.5}};  // link 3, 0.15 from 2, 0.3 from 1
    std::vector<Link> links{{0, 1, 0.02}, {2, 3, 0.02}, {4, 5, 0.02}};
    REQUIRE(conflict(links[0], links[1], radio, pts));
    REQUIRE(conflict(links[1], links[2], radio, pts));
    REQUIRE_FALSE(conflict(links[0], links[2], radio, pts));
    const Slot s = greedy_slot(links, radio, pts);
    REQUIRE(s.links.size() == 2);
    CHECK(s.links[0].tx == 0);
    CHECK(s.links[1].tx == 4);
  }
}

TEST_CASE("greedy_slot equals the pairwise reference and is maximal") {
  Rng rng(401);
  GreedyScratch scratch;
  for (int trial = 0; trial < 60; ++trial) {
    const double r = 0.03 + 0.2 * rng.uniform01();
    const RadioModel radio{r, 1.0, 1.0 + 2.0 * rng.uniform01() + 1e-6};
    const auto inst = random_instance(rng, 1 + rng.uniform_below(120), r);

    const Slot fast = greedy_slot(inst.links, radio, inst.pts, scratch);
    const Slot ref = naive_greedy(inst.links, radio, inst.pts);
    REQUIRE(fast.links.size() == ref.links.size());
    for (std::size_t i = 0; i < fast.links.size(); ++i) {
      CHECK(fast.links[i].tx == ref.links[i].tx);
      CHECK(fast.links[i].rx == ref.links[i].rx);
    }

    // conflict-free
    for (std::size_t i = 0; i < fast.links.size(); ++i)
      for (std::size_t j = i + 1; j < fast.links.size(); ++j)
        CHECK_FALSE(conflict(fast.links[i], fast.links[j], radio, inst.pts));

    // maximal: every rejected candidate conflicts with something accepted
    for (const Link& cand : inst.links) {
      bool accepted = false;
      for (const Link& acc : fast.links)
        if (acc.tx == cand.tx && acc.rx == cand.rx) accepted = true;
      if (accepted) continue;
      bool blocked = false;
      for (const Link& acc : fast.links)
        if (conflict(cand, acc, radio, inst.pts)) blocked = true;
      CHECK(blocked);
    }

    CHECK(fast.links.size() <= packing_upper_bound(radio));
  }
}

TEST_CASE("greedy achieves at least half the optimum on small instances") {
  Rng rng(777);
  for (int trial = 0; trial < 40; ++trial) {
    const RadioModel radio{0.15, 1.0, 2.0};
    const auto inst = random_instance(rng, 12, radio.r);
    const std::size_t m = inst.links.size();

    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
      bool ok = true;
      for (std::size_t i = 0; i < m && ok; ++i) {
        if (!(mask & (1u << i))) continue;
        for (std::size_t j = i + 1; j < m && ok; ++j)
          if ((mask & (1u << j)) && conflict(inst.links[i], inst.links[j], radio, inst.pts))
            ok = false;
      }
      if (ok) best = std::max<std::size_t>(best, std::popcount(mask));
    }
    const Slot s = greedy_slot(inst.links, radio, inst.pts);
    CHECK(2 * s.links.size() >= best);
  }
}
