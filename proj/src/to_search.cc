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

#include "pipetile/to_search.h"

#include <memory>

#include "pipetile/errors.h"

namespace pipetile {

TimeOptimalResult search_time_optimal(const PlacementSpec& p,
                                      int num_microbatches,
                                      double budget_seconds,
                                      const SolverBackend& backend) {
  if (num_microbatches < 1) throw InvalidArgument("need at least one micro-batch");
  std::vector<BlockInstance> xs;
  for (int m = 0; m < num_microbatches; ++m)
    for (int i = 0; i < p.num_stages(); ++i) xs.push_back({i, m});
  SolveRequest req = SolveRequest::FromInstances(p, xs);
  req.budget_seconds = budget_seconds;
  const SolveResult r = solve_min_makespan(req, backend);
  if (!r.has_solution()) {
    if (r.status == SolveStatus::kTimeout)
      throw TimeoutError("time-optimal search found no schedule in budget");
    throw InfeasibleError("no schedule fits the memory capacity");
  }
  auto pp = std::make_shared<const PlacementSpec>(p);
  Schedule s(pp, num_microbatches);
  for (const TimedInstance& x : to_timed(req, r.starts))
    s.set_start(x.stage, x.mb, x.start);
  return TimeOptimalResult{std::move(s), r.status, makespan_lower_bound(req),
                           r.stats};
}

}  // namespace pipetile
