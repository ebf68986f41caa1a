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

#include "oracles.h"
#include "pipetile/baselines.h"
#include "pipetile/errors.h"
#include "pipetile/simulator.h"

using namespace pipetile;

namespace {

std::vector<BlockInstance> device_order(const Schedule& s, int d) {
  std::vector<TimedInstance> xs;
  for (const auto& x : s.instances()) {
    const auto& devs = s.placement().block(x.stage).devices;
    if (std::find(devs.begin(), devs.end(), d) != devs.end()) xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) {
    return a.start < b.start;
  });
  std::vector<BlockInstance> out;
  for (const auto& x : xs) out.push_back({x.stage, x.mb});
  return out;
}

void check_simulates(const Schedule& s) {
  for (CommMode mode : {CommMode::kBlocking, CommMode::kNonBlocking}) {
    const SimReport r = simulate(emit(s, mode));
    CHECK_FALSE(r.deadlock);
    CHECK(r.makespan == s.makespan());
  }
}

}  // namespace

TEST_CASE("1F1B on four devices") {
  const Schedule s = gen_1f1b(4, 6, CostModel::Plain());
  CHECK(validate_schedule(s).empty());
  CHECK(s.makespan() == 27);
  REQUIRE(s.repetend);
  CHECK(s.repetend->period == 3);
  CHECK(steady_bubble_rate(s) == Rational::Of(0, 1));
  CHECK(steady_bubble_rate(gen_1f1b(4, 16)) == Rational::Of(0, 1));
  check_simulates(s);
}

TEST_CASE("1F1B on two devices") {
  const Schedule s = gen_1f1b(2, 2);
  CHECK(validate_schedule(s).empty());
  // f0, f1, b1, b0 on the vshape: device 0 runs both forwards first.
  CHECK(device_order(s, 0) ==
        std::vector<BlockInstance>{{0, 0}, {0, 1}, {3, 0}, {3, 1}});
  CHECK_THROWS_AS(gen_1f1b(4, 3), InvalidArgument);
}

TEST_CASE("GPipe") {
  const Schedule s = gen_gpipe(4, 4, CostModel::Plain());
  CHECK(validate_schedule(s).empty());
  CHECK(s.makespan() == 21);
  CHECK(gen_gpipe(4, 1, CostModel::Plain()).makespan() == 12);
  for (int N : {1, 3, 7}) {
    const auto m = compute_metrics(gen_gpipe(4, N));
    CHECK(m.peak_memory == std::vector<Mem>(4, N));
  }
  check_simulates(s);
}

TEST_CASE("Chimera") {
  const Schedule small = gen_chimera(2, 2);
  CHECK(validate_schedule(small).empty());
  CHECK(small.num_microbatches() == 1);
  const Schedule s = gen_chimera(4, 16, CostModel::Plain());
  CHECK(validate_schedule(s).empty());
  REQUIRE(s.repetend);
  // One basic unit takes 16 units under 1/2 and 22 under 1/3; see below.
  CHECK(steady_bubble_rate(s) == Rational::Of(1, 4));
  CHECK(steady_bubble_rate(gen_chimera(4, 16)) == Rational::Of(3, 11));
  check_simulates(s);
  CHECK_THROWS_AS(gen_chimera(4, 3), InvalidArgument);
  CHECK_THROWS_AS(gen_chimera(3, 4), InvalidArgument);
}

TEST_CASE("every xshape device holds two forward stages") {
  const PlacementSpec p = make_shape(Shape::kXShape, 4);
  for (int d = 0; d < 4; ++d) {
    int forwards = 0;
    for (const auto& b : p.blocks())
      forwards += b.kind == BlockKind::kForward && b.devices == std::vector<int>{d};
    CHECK(forwards == 2);
  }
}

TEST_CASE("1F1B+ on mshape") {
  for (const CostModel& costs : {CostModel::Plain(), CostModel::Recompute()}) {
    const PlacementSpec p = make_shape(Shape::kMShape, 4, costs);
    const Schedule s = gen_1f1b_plus(p, 16);
    CHECK(validate_schedule(s).empty());
    CHECK(steady_bubble_rate(s) == Rational::Of(1, 4));
    check_simulates(s);
  }
}

TEST_CASE("1F1B+ on nnshape") {
  const PlacementSpec p = make_shape(Shape::kNNShape, 4);
  const Schedule s = gen_1f1b_plus(p, 24);
  CHECK(validate_schedule(s).empty());
  REQUIRE(s.repetend);
  CHECK(steady_bubble_rate(s) == Rational::Of(1, 4));
  CHECK(steady_bubble_rate(gen_1f1b_plus(
            make_shape(Shape::kNNShape, 4, CostModel::Plain()), 24)) ==
        Rational::Of(2, 11));
  check_simulates(s);
}

TEST_CASE("1F1B+ rejects kshape") {
  CHECK_THROWS_AS(gen_1f1b_plus(make_shape(Shape::kKShape, 4), 8),
                  UnsupportedPlacement);
}

TEST_CASE("timing fixed device orders") {
  const Schedule ref = gen_1f1b(4, 6);
  std::vector<std::vector<BlockInstance>> orders;
  for (int d = 0; d < 4; ++d) orders.push_back(device_order(ref, d));
  const Schedule s = time_device_orders(ref.placement_ptr(), 6, orders);
  CHECK(s.makespan() == ref.makespan());
  std::swap(orders[0][0], orders[0].back());
  CHECK_THROWS_AS(time_device_orders(ref.placement_ptr(), 6, orders),
                  InvalidArgument);
}

TEST_CASE("a Chimera basic unit cannot be packed tighter") {
  for (const auto& [costs, best] :
       {std::pair{CostModel::Plain(), 16}, std::pair{CostModel::Recompute(), 22}}) {
    const PlacementSpec p = make_shape(Shape::kXShape, 4, costs);
    const auto req =
        SolveRequest::FromInstances(p, oracle::all_instances(p, 2));
    CHECK(oracle::brute_force_makespan(req) == best);
    const Schedule unit = gen_chimera(4, 4, costs);
    CHECK(unit.makespan() == best);
  }
}
