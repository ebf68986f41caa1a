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

#ifndef PIPETILE_REPETEND_H_
#define PIPETILE_REPETEND_H_

#include <functional>
#include <optional>
#include <vector>

#include "pipetile/placement.h"
#include "pipetile/schedule.h"
#include "pipetile/solver.h"

namespace pipetile {

// Per-stage micro-batch index of the one instance each stage contributes to
// a repetend copy.
using Assignment = std::vector<int>;

// True when n_from >= n_to holds on every edge and the minimum index is 0.
bool is_canonical_assignment(const PlacementSpec& p, const Assignment& a);

// Visits every canonical assignment with indices in [0, nr) in lexicographic
// order. With `only_new`, assignments whose largest index is below nr - 1
// (already produced for a smaller nr) are skipped. Returning false from the
// visitor stops the walk.
void iter_repetend_assignments(const PlacementSpec& p, int nr,
                               const std::function<bool(const Assignment&)>& visit,
                               bool only_new = false);

std::vector<Assignment> repetend_assignments(const PlacementSpec& p, int nr);

// Memory held on each device when copy 0 begins: the deltas of every
// instance with micro-batch index below the stage's assigned index.
std::vector<Mem> entry_memory(const PlacementSpec& p, const Assignment& a);

struct Compaction {
  Time period = 0;
  std::vector<Time> exec;  // span of the device's blocks inside one copy
  std::vector<Time> wait;  // idle time before the device's next copy
};

// Materializes copies 0..copies-1 of a repetend: copy k starts at
// offset + k * period with micro-batch indices shifted by k.
std::vector<TimedInstance> tile_repetend(const Assignment& a,
                                         std::span<const Time> starts,
                                         Time period, int copies,
                                         Time offset = 0);

// Number of copies whose joint validity implies validity of any number.
int tiling_witness_copies(const PlacementSpec& p, const Assignment& a);

// Smallest period at which back-to-back copies of the given internal
// schedule stay valid (exclusivity, memory from the entry state and
// cross-copy dependencies). Copies may overlap in time but each device
// finishes its share of one copy before starting the next, so the period
// is at least every device's span.
Compaction compact_period(const PlacementSpec& p, std::span<const Time> starts,
                          const Assignment& a);

struct Repetend {
  Assignment assignment;
  int nr = 1;
  std::vector<Time> starts;  // copy-0 start per stage
  Time period = 0;           // t_R
  std::vector<Time> exec;
  std::vector<Time> wait;
  std::vector<Mem> entry_memory;
};

enum class RepetendStatus { kFound, kNoBetter, kInfeasible, kTimeout };

struct RepetendResult {
  RepetendStatus status = RepetendStatus::kInfeasible;
  std::optional<Repetend> repetend;
  std::string diagnostic;
  SolverStats stats;
};

struct RepetendOptions {
  // Only periods strictly below this bound are tried (0 = no bound).
  Time period_below = 0;
  double budget_seconds = kDefaultBudgetSeconds;
};

// Finds the internal schedule with the smallest period for the assignment.
// Periods are scanned upward from the device-load bound; each device's
// blocks of one copy are kept inside one period-long window.
RepetendResult solve_repetend(const PlacementSpec& p, const Assignment& a,
                              const RepetendOptions& opts = {});

}  // namespace pipetile

#endif  // PIPETILE_REPETEND_H_
