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

#include <chrono>

#include "oracles.h"
#include "pipetile/completion.h"
#include "pipetile/errors.h"
#include "pipetile/extension.h"
#include "pipetile/to_search.h"

using namespace pipetile;

namespace {

const PlacementSpec kV4 = make_shape(Shape::kVShape, 4, CostModel::Plain());

double seconds(int N) {
  double best = 1e9;
  for (int rep = 0; rep < 5; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    search_time_optimal(kV4, N);
    best = std::min(best, std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0)
                              .count());
  }
  return best;
}

}  // namespace

TEST_CASE("one micro-batch") {
  const auto r = search_time_optimal(kV4, 1);
  CHECK(r.status == SolveStatus::kOptimal);
  CHECK(r.schedule.makespan() == 12);
}

TEST_CASE("two micro-batches match exhaustive enumeration") {
  const auto r = search_time_optimal(kV4, 2);
  CHECK(r.schedule.makespan() == 15);
  CHECK(validate_schedule(r.schedule).empty());
  const auto req =
      SolveRequest::FromInstances(kV4, oracle::all_instances(kV4, 2));
  CHECK(oracle::brute_force_makespan(req) == 15);
}

TEST_CASE("every backend finds the optimum") {
  for (BackendKind b :
       {BackendKind::kEvent, BackendKind::kDifference, BackendKind::kDisjunctive}) {
    // Append-order search is exponential here; keep it small.
    const int top = b == BackendKind::kDifference ? 3 : 4;
    for (int N = 1; N <= top; ++N) {
      const auto r =
          search_time_optimal(kV4, N, kDefaultBudgetSeconds, *make_backend(b));
      CHECK(r.status == SolveStatus::kOptimal);
      CHECK(r.schedule.makespan() == 12 + 3 * (N - 1));
    }
  }
}

TEST_CASE("search effort grows with N") {
  std::int64_t last_nodes = -1;
  for (int N = 2; N <= 6; ++N) {
    const auto r = search_time_optimal(kV4, N);
    CHECK(r.stats.nodes > last_nodes);
    last_nodes = r.stats.nodes;
  }
  CHECK(seconds(6) > seconds(2));
}

TEST_CASE("memory-bound optimum") {
  const auto r = search_time_optimal(kV4.with_memory(1), 2);
  CHECK(r.schedule.makespan() == 24);
  CHECK(validate_schedule(r.schedule).empty());
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(search_time_optimal(kV4, 0), InvalidArgument);
  CHECK_THROWS_AS(search_time_optimal(make_shape(Shape::kMShape, 4), 6, 0),
                  TimeoutError);
  std::vector<BlockSpec> blocks(1);
  blocks[0].devices = {0};
  blocks[0].mem_delta = 2;
  CHECK_THROWS_AS(
      search_time_optimal(PlacementSpec::Create(1, 1, blocks, {}), 1),
      InfeasibleError);
}

TEST_CASE("extended plans reach the time-optimal steady rate") {
  // At N = 4 the V4 two-phase plan is time-optimal.
  const SearchResult res = search(kV4);
  const auto to = search_time_optimal(kV4, 4);
  CHECK(extend(res.schedule, 4).makespan() == to.schedule.makespan());
  CHECK(to.lower_bound <= to.schedule.makespan());
}
