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

#ifndef PIPETILE_COMPLETION_H_
#define PIPETILE_COMPLETION_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipetile/placement.h"
#include "pipetile/repetend.h"
#include "pipetile/schedule.h"
#include "pipetile/solver.h"

namespace pipetile {

// { B_i^n | n < a_i }, stage-major.
std::vector<BlockInstance> warmup_blocks(const Assignment& a);
// { B_i^n | a_i < n < nr }, stage-major.
std::vector<BlockInstance> cooldown_blocks(const Assignment& a, int nr);

// Memory held on each device when the cooldown of an N-micro-batch plan
// begins: the warmup plus N - nr + 1 repetend copies.
std::vector<Mem> cooldown_entry_memory(const PlacementSpec& p,
                                       const Repetend& r, int num_microbatches);

// How many micro-batches fit in flight under the placement's capacity: per
// device, capacity over the largest running memory of one micro-batch's
// blocks taken in dependency order; the minimum over devices. Devices whose
// blocks never hold memory impose no limit (INT_MAX).
int max_inflight(const PlacementSpec& p);

struct SearchOptions {
  int max_nr = 8;
  double budget_seconds = kDefaultBudgetSeconds;
  // Defer warmup/cooldown optimization until the best repetend is known;
  // candidates only get a feasibility check meanwhile.
  bool lazy = true;
  int jobs = 1;
};

struct CandidateRecord {
  Assignment assignment;
  int nr = 0;
  std::string outcome;  // found, no-better, infeasible, timeout, incomplete
  std::optional<Time> period;
  bool improved = false;
};

struct SearchReport {
  Time lower_bound = 0;
  int inflight_limit = 0;
  int nr_limit = 0;
  bool early_exit = false;
  bool timed_out = false;  // some candidate ran out of budget
  bool lazy = true;
  std::vector<CandidateRecord> candidates;
  double repetend_seconds = 0;
  double warmup_seconds = 0;
  double cooldown_seconds = 0;
  double concat_seconds = 0;
  SolverStats stats;
};

nlohmann::json report_to_json(const SearchReport& r);

struct SearchResult {
  Schedule schedule;  // nr micro-batches with a repetend annotation
  Repetend repetend;
  SearchReport report;
};

// Two-phase search: best repetend over increasing in-flight counts, then
// time-optimal warmup and cooldown around it. Throws InfeasibleError when no
// candidate fits the memory capacity and TimeoutError when the budget ran
// out before any schedule was completed.
SearchResult search(const PlacementSpec& p, const SearchOptions& opts = {});

// Joins solved phases into one plan of nr micro-batches. Copy 0 and the
// cooldown are placed at the earliest offsets that keep the plan valid for
// every extension.
Schedule concat_phases(std::shared_ptr<const PlacementSpec> p,
                       const Repetend& r,
                       std::span<const TimedInstance> warmup,
                       std::span<const TimedInstance> cooldown);

}  // namespace pipetile

#endif  // PIPETILE_COMPLETION_H_
