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
#include <filesystem>
#include <random>

#include "oracles.h"
#include "pipetile/baselines.h"
#include "pipetile/errors.h"
#include "pipetile/schedule.h"

using namespace pipetile;

namespace {

std::shared_ptr<const PlacementSpec> v4(Mem capacity = kUnboundedMemory) {
  return std::make_shared<const PlacementSpec>(
      make_shape(Shape::kVShape, 4, CostModel::Plain(), capacity));
}

Schedule chain_v4() {
  Schedule s(v4(), 1);
  const Time starts[] = {0, 1, 2, 3, 4, 6, 8, 10};
  for (int i = 0; i < 8; ++i) s.set_start(i, 0, starts[i]);
  return s;
}

bool has_kind(const std::vector<Violation>& vs, ViolationKind k) {
  return std::any_of(vs.begin(), vs.end(),
                     [&](const Violation& v) { return v.kind == k; });
}

std::vector<std::vector<Time>> starts_per_stage(const Schedule& s) {
  std::vector<std::vector<Time>> out(s.num_stages());
  for (int i = 0; i < s.num_stages(); ++i) {
    for (int n = 0; n < s.num_microbatches(); ++n)
      out[i].push_back(s.start(i, n));
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

}  // namespace

TEST_CASE("sequential chain is valid") {
  const Schedule s = chain_v4();
  CHECK(validate_schedule(s).empty());
  CHECK(s.makespan() == 12);
}

TEST_CASE("backward overlapping its producer") {
  Schedule s = chain_v4();
  s.set_start(4, 0, 3);
  const auto vs = validate_schedule(s);
  REQUIRE(has_kind(vs, ViolationKind::kDependency));
  bool named = false;
  for (const auto& v : vs) {
    if (v.kind != ViolationKind::kDependency) continue;
    named |= std::find(v.instances.begin(), v.instances.end(),
                       BlockInstance{3, 0}) != v.instances.end() &&
             std::find(v.instances.begin(), v.instances.end(),
                       BlockInstance{4, 0}) != v.instances.end();
  }
  CHECK(named);
}

TEST_CASE("two forwards in flight with capacity one") {
  Schedule s(v4(1), 2);
  const Time starts[] = {0, 1, 2, 3, 4, 6, 8, 10};
  for (int i = 0; i < 8; ++i) {
    s.set_start(i, 0, starts[i] + (i == 0 ? 0 : 1));
    s.set_start(i, 1, starts[i] + 20);
  }
  s.set_start(0, 1, 1);
  const auto vs = validate_schedule(s);
  CHECK(has_kind(vs, ViolationKind::kMemory));
  CHECK_FALSE(has_kind(vs, ViolationKind::kExclusivity));
}

TEST_CASE("partially overlapping device sets are exclusive") {
  const PlacementSpec p = make_shape(Shape::kMShape, 4);
  std::vector<TimedInstance> xs = {{0, 0, 0}, {1, 1, 0}};
  REQUIRE(p.block(0).devices.size() == 4);
  REQUIRE(p.block(1).devices.size() == 1);
  CHECK(has_kind(validate_instances(p, xs), ViolationKind::kExclusivity));
}

TEST_CASE("validator agrees with the timeline oracle") {
  std::mt19937 rng(7);
  int valid = 0, invalid = 0;
  for (int trial = 0; trial < 600; ++trial) {
    const int K = 3 + trial % 4;
    const int D = 1 + trial % 3;
    PlacementSpec base = oracle::random_placement(rng, K, D);
    const Mem cap = 1 + trial % 3;
    auto p = std::make_shared<const PlacementSpec>(base.with_memory(cap));
    const int N = 1 + trial % 3;
    Schedule s = oracle::random_valid_schedule(p, N, rng);
    if (trial % 2) {
      std::uniform_int_distribution<int> stage(0, K - 1), mb(0, N - 1);
      std::uniform_int_distribution<Time> shift(-3, 3);
      const int i = stage(rng), n = mb(rng);
      s.set_start(i, n, std::max<Time>(0, s.start(i, n) + shift(rng)));
    }
    const auto xs = s.instances();
    const bool ok = validate_schedule(s).empty();
    CHECK(ok == oracle::timeline_valid(*p, xs));
    (ok ? valid : invalid)++;
  }
  CHECK(valid > 50);
  CHECK(invalid > 50);
}

TEST_CASE("1F1B metrics") {
  const Schedule s = gen_1f1b(4, 6, CostModel::Plain());
  REQUIRE(validate_schedule(s).empty());
  const auto m = compute_metrics(s);
  CHECK(m.makespan == 27);
  REQUIRE(m.bubble_rate_steady.has_value());
  CHECK(*m.bubble_rate_steady == Rational::Of(0, 1));
  CHECK(steady_bubble_rate(s) == Rational::Of(0, 1));
}

TEST_CASE("chain metrics") {
  const auto m = compute_metrics(chain_v4());
  CHECK(m.makespan == 12);
  CHECK(m.bubble_rate_total == Rational::Of(3, 4));
  CHECK(m.per_device_busy == std::vector<Time>{3, 3, 3, 3});
  CHECK(m.peak_memory == std::vector<Mem>{1, 1, 1, 1});
  CHECK_FALSE(m.bubble_rate_steady.has_value());
  CHECK_THROWS_AS(steady_bubble_rate(chain_v4()), MissingAnnotation);
}

TEST_CASE("single busy device has no bubble") {
  BlockSpec b;
  b.time_cost = 5;
  b.devices = {0};
  auto p = std::make_shared<const PlacementSpec>(
      PlacementSpec::Create(1, 1, {b}, {}));
  Schedule s(p, 1);
  s.set_start(0, 0, 0);
  const auto m = compute_metrics(s);
  CHECK(m.makespan == 5);
  CHECK(m.bubble_rate_total == Rational::Of(0, 1));
}

TEST_CASE("metric invariants on random valid schedules") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = std::make_shared<const PlacementSpec>(
        oracle::random_placement(rng, 3 + trial % 5, 1 + trial % 4));
    const Schedule s = oracle::random_valid_schedule(p, 1 + trial % 3, rng);
    REQUIRE(validate_schedule(s).empty());
    const auto m = compute_metrics(s);
    CHECK(m.makespan >= *std::max_element(m.per_device_busy.begin(),
                                          m.per_device_busy.end()));
    CHECK(m.bubble_rate_total >= Rational::Of(0, 1));
    CHECK(m.bubble_rate_total <= Rational::Of(1, 1));
  }
}

TEST_CASE("canonicalization swaps out-of-order indices") {
  Schedule s(v4(), 2);
  for (int i = 0; i < 8; ++i) {
    s.set_start(i, 1, chain_v4().start(i, 0));
    s.set_start(i, 0, chain_v4().start(i, 0) + 12);
  }
  REQUIRE(validate_schedule(s).empty());
  const Schedule c = canonicalize_microbatch_order(s);
  for (int i = 0; i < 8; ++i) {
    CHECK(c.start(i, 0) == s.start(i, 1));
    CHECK(c.start(i, 1) == s.start(i, 0));
  }
  CHECK(starts_per_stage(c) == starts_per_stage(s));
}

TEST_CASE("canonical 1F1B is unchanged") {
  const Schedule s = gen_1f1b(4, 6, CostModel::Plain());
  CHECK(canonicalize_microbatch_order(s) == s);
}

TEST_CASE("canonicalization preserves validity and makespan") {
  std::mt19937 rng(3);
  auto p = v4();
  for (int trial = 0; trial < 300; ++trial) {
    const Schedule s = oracle::random_valid_schedule(p, 3, rng);
    REQUIRE(validate_schedule(s).empty());
    const Schedule c = canonicalize_microbatch_order(s);
    CHECK(validate_schedule(c).empty());
    CHECK(c.makespan() == s.makespan());
    CHECK(starts_per_stage(c) == starts_per_stage(s));
    CHECK(canonicalize_microbatch_order(c) == c);
    for (int i = 0; i < 8; ++i)
      for (int n = 1; n < 3; ++n) CHECK(c.start(i, n - 1) <= c.start(i, n));
  }
  for (int trial = 0; trial < 200; ++trial) {
    auto q = std::make_shared<const PlacementSpec>(
        oracle::random_placement(rng, 4 + trial % 3, 2));
    const Schedule s = oracle::random_valid_schedule(q, 3, rng);
    const Schedule c = canonicalize_microbatch_order(s);
    CHECK(validate_schedule(c).empty());
    CHECK(c.makespan() == s.makespan());
  }
}

TEST_CASE("left justification") {
  Schedule late = chain_v4();
  late.set_start(7, 0, 15);
  CHECK(left_justify(late) == chain_v4());

  std::mt19937 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = std::make_shared<const PlacementSpec>(
        oracle::random_placement(rng, 3 + trial % 5, 1 + trial % 3));
    Schedule s = oracle::random_valid_schedule(p, 1 + trial % 3, rng);
    // Spread the blocks out, keeping their relative order.
    for (int i = 0; i < s.num_stages(); ++i)
      for (int n = 0; n < s.num_microbatches(); ++n)
        s.set_start(i, n, 2 * s.start(i, n) + (i + n) % 2);
    REQUIRE(validate_schedule(s).empty());
    const Schedule l = left_justify(s);
    CAPTURE(trial);
    CHECK(validate_schedule(l).empty());
    CHECK(left_justify(l) == l);
    CHECK(l.makespan() <= s.makespan());
    for (int i = 0; i < s.num_stages(); ++i)
      for (int n = 0; n < s.num_microbatches(); ++n)
        CHECK(l.start(i, n) <= s.start(i, n));
  }
}

TEST_CASE("plan json round trip") {
  const Schedule s = gen_1f1b(4, 6, CostModel::Plain());
  const auto j = schedule_to_json(s);
  CHECK(j.contains("placement"));
  CHECK(j.at("N") == 6);
  CHECK(j.at("entries").size() == 48);
  CHECK(j.at("repetend").contains("period"));
  CHECK(schedule_from_json(j) == s);

  const auto path =
      (std::filesystem::temp_directory_path() / "pipetile_plan_rt.json")
          .string();
  save_plan(s, path);
  CHECK(load_plan(path) == s);
  std::filesystem::remove(path);

  auto bad = j;
  bad["entries"][0]["stage"] = 99;
  CHECK_THROWS_AS(schedule_from_json(bad), ParseError);
  bad = j;
  bad.erase("N");
  CHECK_THROWS_AS(schedule_from_json(bad), ParseError);
}

TEST_CASE("plan with a shape pseudo-path placement") {
  nlohmann::json j = schedule_to_json(chain_v4());
  j["placement"] = "shape:vshape:4:1/2";
  CHECK(schedule_from_json(j).makespan() == 12);
}
