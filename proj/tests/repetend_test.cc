/* Copyright 2026 The pipetile Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "oracles.h"
#include "pipetile/errors.h"
#include "pipetile/repetend.h"

using namespace pipetile;

namespace {

const PlacementSpec kV4 = make_shape(Shape::kVShape, 4, CostModel::Plain());
const Assignment k1F1B = {3, 2, 1, 0, 0, 0, 0, 0};

// Every vector in [0, nr)^K with minimum 0, in lexicographic order.
std::vector<Assignment> unpruned(int K, int nr) {
  std::vector<Assignment> out;
  Assignment a(K, 0);
  while (true) {
    if (*std::min_element(a.begin(), a.end()) == 0) out.push_back(a);
    int i = K - 1;
    while (i >= 0 && a[i] == nr - 1) a[i--] = 0;
    if (i < 0) break;
    a[i]++;
  }
  return out;
}

bool monotone(const PlacementSpec& p, const Assignment& a) {
  for (const Dep& e : p.deps())
    if (a[e.from] < a[e.to]) return false;
  return true;
}

PlacementSpec independent_pair() {
  std::vector<BlockSpec> blocks(2);
  for (int i = 0; i < 2; ++i) {
    blocks[i].stage_id = i;
    blocks[i].devices = {i};
  }
  return PlacementSpec::Create(2, 4, blocks, {});
}

}  // namespace

TEST_CASE("one micro-batch gives the all-zero assignment") {
  const auto as = repetend_assignments(kV4, 1);
  REQUIRE(as.size() == 1);
  CHECK(as[0] == Assignment(8, 0));
}

TEST_CASE("chain with two micro-batches") {
  const auto as = repetend_assignments(kV4, 2);
  CHECK(as.size() == 8);
  std::vector<Assignment> oracle;
  for (const auto& a : unpruned(8, 2))
    if (monotone(kV4, a)) oracle.push_back(a);
  CHECK(as == oracle);
}

TEST_CASE("two independent stages") {
  const auto as = repetend_assignments(independent_pair(), 2);
  CHECK(as == std::vector<Assignment>{{0, 0}, {0, 1}, {1, 0}});
}

TEST_CASE("enumeration matches filtered brute force") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const PlacementSpec p =
        oracle::random_placement(rng, 2 + trial % 5, 1 + trial % 3);
    for (int nr = 1; nr <= 3; ++nr) {
      std::vector<Assignment> oracle;
      for (const auto& a : unpruned(p.num_stages(), nr))
        if (monotone(p, a)) oracle.push_back(a);
      const auto as = repetend_assignments(p, nr);
      CHECK(as == oracle);
      for (const auto& a : as) CHECK(is_canonical_assignment(p, a));
      std::vector<Assignment> fresh;
      iter_repetend_assignments(
          p, nr,
          [&](const Assignment& a) {
            fresh.push_back(a);
            return true;
          },
          true);
      std::vector<Assignment> expected;
      for (const auto& a : oracle)
        if (*std::max_element(a.begin(), a.end()) == nr - 1)
          expected.push_back(a);
      CHECK(fresh == expected);
    }
  }
}

TEST_CASE("entry memory") {
  const auto e = entry_memory(kV4, k1F1B);
  CHECK(e == std::vector<Mem>{3, 2, 1, 0});
  CHECK(entry_memory(kV4, Assignment(8, 0)) == std::vector<Mem>(4, 0));
  const PlacementSpec m = make_shape(Shape::kMShape, 4);
  Assignment a(m.num_stages(), 0);
  int embed = -1;
  for (int i = 0; i < m.num_stages(); ++i)
    if (m.preds(i).empty()) embed = i;
  REQUIRE(m.block(embed).devices.size() == 4);
  a[embed] = 1;
  CHECK(entry_memory(m, a) == std::vector<Mem>(4, 1));
}

TEST_CASE("1F1B repetend has period three") {
  const auto r = solve_repetend(kV4.with_memory(4), k1F1B);
  REQUIRE(r.status == RepetendStatus::kFound);
  const Repetend& rep = *r.repetend;
  CHECK(rep.period == 3);
  CHECK(rep.nr == 4);
  CHECK(rep.entry_memory == std::vector<Mem>{3, 2, 1, 0});
  for (int d = 0; d < 4; ++d) {
    CHECK(rep.exec[d] + rep.wait[d] == rep.period);
  }
  CHECK(oracle::brute_force_period(kV4, k1F1B, 12) == 3);
}

TEST_CASE("all-zero repetend is the serial chain") {
  const auto r = solve_repetend(kV4, Assignment(8, 0));
  REQUIRE(r.status == RepetendStatus::kFound);
  CHECK(r.repetend->period == 12);
}

TEST_CASE("entry memory above capacity") {
  const auto r = solve_repetend(kV4.with_memory(2), k1F1B);
  CHECK(r.status == RepetendStatus::kInfeasible);
  CHECK_FALSE(r.repetend.has_value());
  CHECK(r.diagnostic.find("entry memory") != std::string::npos);
}

TEST_CASE("memory growth has no steady state") {
  std::vector<BlockSpec> blocks(1);
  blocks[0].devices = {0};
  blocks[0].mem_delta = 1;
  const auto p = PlacementSpec::Create(1, 100, blocks, {});
  const auto r = solve_repetend(p, {0});
  CHECK(r.status == RepetendStatus::kInfeasible);
  CHECK(r.diagnostic.find("gains memory") != std::string::npos);
}

TEST_CASE("non-canonical assignments are rejected") {
  CHECK_THROWS_AS(solve_repetend(kV4, {0, 1, 0, 0, 0, 0, 0, 0}),
                  InvalidArgument);
}

TEST_CASE("compaction starts the next copy before the previous ends") {
  const auto r = solve_repetend(kV4, k1F1B);
  REQUIRE(r.status == RepetendStatus::kFound);
  const auto& starts = r.repetend->starts;
  Time lo = starts[0], hi = 0;
  for (int i = 0; i < 8; ++i) {
    lo = std::min(lo, starts[i]);
    hi = std::max(hi, starts[i] + kV4.block(i).time_cost);
  }
  const Compaction c = compact_period(kV4, starts, k1F1B);
  CHECK(c.period == 3);
  CHECK(c.period < hi - lo);
}

TEST_CASE("serial device") {
  std::vector<BlockSpec> blocks(3);
  std::vector<Dep> deps;
  for (int i = 0; i < 3; ++i) {
    blocks[i].stage_id = i;
    blocks[i].devices = {0};
    blocks[i].time_cost = i + 2;
  }
  deps.push_back({0, 2});
  const auto p = PlacementSpec::Create(1, 1, blocks, deps);
  for (const auto& a : repetend_assignments(p, 3)) {
    const auto r = solve_repetend(p, a);
    REQUIRE(r.status == RepetendStatus::kFound);
    CHECK(r.repetend->period == 9);
  }
}

TEST_CASE("solved periods match the brute-force oracle") {
  std::mt19937 rng(21);
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const PlacementSpec p =
        oracle::random_placement(rng, 3 + trial % 3, 1 + trial % 3, 2);
    bool grows = false;
    for (int d = 0; d < p.num_devices(); ++d) grows |= p.net_mem_delta(d) > 0;
    for (int nr = 1; nr <= 3; ++nr) {
      for (const auto& a : repetend_assignments(p, nr)) {
        const auto r = solve_repetend(p, a);
        if (grows) {
          CHECK(r.status == RepetendStatus::kInfeasible);
          continue;
        }
        REQUIRE(r.status == RepetendStatus::kFound);
        CAPTURE(trial);
        CHECK(r.repetend->period ==
              oracle::brute_force_period(p, a, p.total_cost()));
        CHECK(r.repetend->period >= p.period_lower_bound());
        // Five back-to-back copies validate from the entry state.
        const auto tiled =
            tile_repetend(a, r.repetend->starts, r.repetend->period, 5);
        CHECK(validate_instances(p, tiled, r.repetend->entry_memory).empty());
        ++compared;
      }
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("pruned assignments are never better") {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 12; ++trial) {
    const PlacementSpec p =
        oracle::random_placement(rng, 3 + trial % 2, 2, 2);
    for (int nr = 2; nr <= 3; ++nr) {
      Time kept = -1;
      for (const auto& a : repetend_assignments(p, nr)) {
        const Time t = oracle::brute_force_period(p, a, p.total_cost());
        if (t > 0 && (kept < 0 || t < kept)) kept = t;
      }
      REQUIRE(kept > 0);
      for (const auto& a : unpruned(p.num_stages(), nr)) {
        if (monotone(p, a)) continue;
        const Time t = oracle::brute_force_period(p, a, p.total_cost());
        if (t > 0) CHECK(kept <= t);
      }
    }
  }
}

TEST_CASE("tiling witness covers the longest cross-copy edge") {
  CHECK(tiling_witness_copies(kV4, k1F1B) >= 3 + 2);
  const auto xs = tile_repetend(k1F1B, std::vector<Time>(8, 0), 3, 2, 10);
  REQUIRE(xs.size() == 16);
  CHECK(xs[8].start == 13);
  CHECK(xs[8].mb == k1F1B[xs[8].stage] + 1);
}
