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

#include "pipetile/baselines.h"
#include "pipetile/completion.h"
#include "pipetile/errors.h"
#include "pipetile/extension.h"
#include "pipetile/program.h"
#include "pipetile/simulator.h"

using namespace pipetile;

namespace {

double gap(const Schedule& s, const Rational& steady) {
  return compute_metrics(s).bubble_rate_total.to_double() - steady.to_double();
}

}  // namespace

TEST_CASE("extending to the base count is the identity") {
  const SearchResult res = search(make_shape(Shape::kVShape, 4));
  CHECK(extend(res.schedule, res.schedule.num_microbatches()) == res.schedule);
}

TEST_CASE("1F1B grows by one micro-batch") {
  const Schedule six = gen_1f1b(4, 6, CostModel::Plain());
  const Schedule seven = extend(six, 7);
  CHECK(validate_schedule(seven).empty());
  CHECK(seven.makespan() == 30);
  const Schedule generated = gen_1f1b(4, 7, CostModel::Plain());
  for (int i = 0; i < 8; ++i)
    for (int n = 0; n < 7; ++n) CHECK(seven.start(i, n) == generated.start(i, n));
}

TEST_CASE("v4 plan at 128 micro-batches") {
  const SearchResult res =
      search(make_shape(Shape::kVShape, 4, CostModel::Plain()));
  const int nr = res.schedule.num_microbatches();
  const Schedule big = extend(res.schedule, 128);
  CHECK(big.num_microbatches() == 128);
  CHECK(big.instances().size() == 128u * 8);
  CHECK(validate_schedule(big).empty());
  CHECK(big.makespan() == res.schedule.makespan() + (128 - nr) * 3);
  const SimReport sim = simulate(emit(big, CommMode::kNonBlocking));
  CHECK_FALSE(sim.deadlock);
  CHECK(sim.makespan == big.makespan());
}

TEST_CASE("makespan is affine in N") {
  for (Shape shape : {Shape::kVShape, Shape::kKShape, Shape::kXShape}) {
    CAPTURE(to_string(shape));
    const SearchResult res = search(make_shape(shape, 4));
    const Schedule& s = res.schedule;
    const int nr = s.num_microbatches();
    const Time P = res.repetend.period;
    std::vector<int> ladder;
    for (int N = nr; N <= nr + 8; ++N) ladder.push_back(N);
    ladder.push_back(64);
    ladder.push_back(128);
    const Rational steady = steady_bubble_rate(s);
    double last_gap = 2;
    for (int N : ladder) {
      CAPTURE(N);
      const Schedule e = extend(s, N);
      CHECK(validate_schedule(e).empty());
      CHECK(e.makespan() == s.makespan() + (N - nr) * P);
      CHECK(steady_bubble_rate(e) == steady);
      const double g = gap(e, steady);
      CHECK(g <= last_gap + 1e-12);
      last_gap = g;
    }
  }
}

TEST_CASE("extending an extended plan") {
  const SearchResult res = search(make_shape(Shape::kKShape, 4));
  const Schedule twice = extend(extend(res.schedule, 10), 17);
  CHECK(twice == extend(res.schedule, 17));
}

TEST_CASE("plans with a copy running ahead of the pattern") {
  // Under this capacity the left-justified copy 0 is not a clean replica.
  const SearchResult res = search(make_shape(Shape::kXShape, 4).with_memory(3));
  const Schedule& s = res.schedule;
  REQUIRE(s.repetend);
  REQUIRE_FALSE(s.repetend->copy_starts.empty());
  const int nr = s.num_microbatches();
  const Time P = s.repetend->period;
  for (int N = nr; N <= 40; ++N) {
    const Schedule e = extend(s, N);
    CAPTURE(N);
    CHECK(validate_schedule(e).empty());
    CHECK(e.makespan() == s.makespan() + (N - nr) * P);
    CHECK(left_justify(e) == e);
    CHECK(simulate(emit(e, CommMode::kNonBlocking)).makespan == e.makespan());
  }
  const Schedule again = schedule_from_json(schedule_to_json(s));
  CHECK(again == s);
  nlohmann::json j = schedule_to_json(s);
  j["repetend"]["copy_starts"].erase(0);
  CHECK_THROWS_AS(schedule_from_json(j), ParseError);
}

TEST_CASE("extension errors") {
  Schedule plain = gen_gpipe(4, 4);
  plain.repetend.reset();
  CHECK_THROWS_AS(extend(plain, 8), MissingAnnotation);
  const SearchResult res = search(make_shape(Shape::kVShape, 4));
  CHECK_THROWS_AS(extend(res.schedule, res.schedule.num_microbatches() - 1),
                  InvalidArgument);
  // A window-only annotation carries no copy structure.
  const Schedule chimera = gen_chimera(4, 16);
  REQUIRE(chimera.repetend);
  if (chimera.repetend->assignment.empty())
    CHECK_THROWS_AS(extend(chimera, 20), MissingAnnotation);
}
