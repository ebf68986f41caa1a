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

#ifndef PIPETILE_TO_SEARCH_H_
#define PIPETILE_TO_SEARCH_H_

#include "pipetile/placement.h"
#include "pipetile/schedule.h"
#include "pipetile/solver.h"

namespace pipetile {

struct TimeOptimalResult {
  Schedule schedule;
  // kOptimal, or kTimeout when the budget ran out with `schedule` as the
  // best one found.
  SolveStatus status = SolveStatus::kOptimal;
  Time lower_bound = 0;
  SolverStats stats;
};

// Minimal-makespan schedule of all N micro-batches solved as one problem.
// Throws TimeoutError when the budget ends before any schedule is found and
// InfeasibleError when none fits the memory capacity.
TimeOptimalResult search_time_optimal(
    const PlacementSpec& p, int num_microbatches,
    double budget_seconds = kDefaultBudgetSeconds,
    const SolverBackend& backend = default_backend());

}  // namespace pipetile

#endif  // PIPETILE_TO_SEARCH_H_
