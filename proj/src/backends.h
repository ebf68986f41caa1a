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

// Internal: backend factories and helpers shared by the solver sources.

#ifndef PIPETILE_SRC_BACKENDS_H_
#define PIPETILE_SRC_BACKENDS_H_

#include <memory>
#include <vector>

#include "pipetile/solver.h"

namespace pipetile::internal {

std::unique_ptr<SolverBackend> make_event_backend();
std::unique_ptr<SolverBackend> make_difference_backend();
std::unique_ptr<SolverBackend> make_disjunctive_backend();

// Request edges plus order_after constraints (lag = predecessor's time).
std::vector<SolveEdge> all_edges(const SolveRequest& req);

// Instances in a topological order of all_edges; empty if cyclic.
std::vector<int> topo_order(int n, const std::vector<SolveEdge>& edges);

Time objective_of(const SolveRequest& req, const std::vector<Time>& starts);

}  // namespace pipetile::internal

#endif  // PIPETILE_SRC_BACKENDS_H_
