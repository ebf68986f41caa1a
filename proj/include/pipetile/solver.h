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

#ifndef PIPETILE_SOLVER_H_
#define PIPETILE_SOLVER_H_

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pipetile/placement.h"
#include "pipetile/schedule.h"

namespace pipetile {

struct SolveInstance {
  int stage = 0;
  int mb = 0;
  Time time = 1;
  DeviceMask devices = 0;
  Mem mem = 0;
};

// start[to] >= start[from] + lag. Plain data dependencies use the producer's
// time cost as lag; periodic problems use smaller (possibly negative) lags.
struct SolveEdge {
  int from = 0;
  int to = 0;
  Time lag = 0;
};

enum class SolveMode { kOptimize, kDecide };
enum class SolveStatus { kOptimal, kSatisfiable, kInfeasible, kTimeout };

std::string_view to_string(SolveStatus s);

inline constexpr double kDefaultBudgetSeconds = 300.0;

// TESSEL_BUDGET_SECS when set to a non-negative number, else `fallback`.
double budget_seconds_from_env(double fallback = kDefaultBudgetSeconds);

struct SolveRequest {
  int num_devices = 1;
  Mem mem_capacity = kUnboundedMemory;
  std::vector<SolveInstance> instances;
  std::vector<SolveEdge> edges;
  std::vector<Mem> initial_memory;  // per device; empty means zeros
  std::optional<Time> horizon;      // required in decide mode
  SolveMode mode = SolveMode::kOptimize;
  double budget_seconds = kDefaultBudgetSeconds;

  // Optional: each device's blocks must fit in a window of this length.
  std::optional<Time> device_span;
  // order_after[i] >= 0 forces instance i to start after that instance. Used
  // for micro-batch symmetry breaking; never changes the optimum.
  std::vector<int> order_after;
  // fixed_start[i] >= 0 pins instance i to that start time; empty or -1
  // leaves it free.
  std::vector<Time> fixed_start;
  // Search nodes per decide call; 0 means no limit. Unlike the wall-clock
  // budget this cap gives the same answer on every machine.
  std::int64_t node_limit = 0;

  bool pinned(int i) const {
    return !fixed_start.empty() && fixed_start[i] >= 0;
  }

  // Builds a request over the given instances with the placement's
  // dependencies applied between instances of the same micro-batch.
  // Symmetry breaking is switched on when relabeling micro-batches within a
  // stage provably preserves every dependency.
  static SolveRequest FromInstances(const PlacementSpec& p,
                                    std::span<const BlockInstance> instances,
                                    std::span<const Mem> initial_memory = {});

  // Throws InvalidArgument when the request breaks its own invariants.
  void check() const;
};

struct SolverStats {
  std::int64_t nodes = 0;
  std::int64_t failures = 0;
  std::int64_t decide_calls = 0;
  double wall_seconds = 0.0;

  SolverStats& operator+=(const SolverStats& o) {
    nodes += o.nodes;
    failures += o.failures;
    decide_calls += o.decide_calls;
    wall_seconds += o.wall_seconds;
    return *this;
  }
};

struct SolveResult {
  SolveStatus status = SolveStatus::kInfeasible;
  std::vector<Time> starts;  // aligned with request.instances; empty if none
  Time objective = 0;        // makespan of `starts`
  SolverStats stats;
  // kTimeout caused by node_limit rather than the wall-clock budget.
  bool node_limited = false;

  bool has_solution() const { return !starts.empty(); }
};

class Deadline {
 public:
  explicit Deadline(double seconds);
  bool expired() const { return std::chrono::steady_clock::now() >= at_; }

 private:
  std::chrono::steady_clock::time_point at_;
};

// A decision procedure: find start times with every instance finished by
// `horizon`, or prove there are none.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual std::string_view name() const = 0;
  virtual bool supports(const SolveRequest& req) const = 0;
  // Returns kSatisfiable, kInfeasible or kTimeout.
  virtual SolveResult decide(const SolveRequest& req, Time horizon,
                             const Deadline& deadline) const = 0;
};

enum class BackendKind {
  // Event-driven branch and bound over block start events (default).
  kEvent,
  // Ordering decisions over a difference-logic core; also handles negative
  // lags and device span limits.
  kDifference,
  // Branching on the order of each pair of instances that share a device,
  // over the same difference-logic core. Same features as kDifference.
  kDisjunctive,
};

std::unique_ptr<SolverBackend> make_backend(BackendKind kind);
const SolverBackend& default_backend();
BackendKind backend_from_string(std::string_view s);

// Critical-path and per-device load bound on the makespan.
Time makespan_lower_bound(const SolveRequest& req);

// Binary search on the makespan between makespan_lower_bound and the first
// witness found at the trivial upper bound (sum of all costs). A probe that
// hits node_limit counts as a failure at that horizon; the result is then
// kSatisfiable instead of kOptimal.
SolveResult solve_min_makespan(const SolveRequest& req,
                               const SolverBackend& backend = default_backend());

// Single feasibility check at req.horizon.
SolveResult solve_decide(const SolveRequest& req,
                         const SolverBackend& backend = default_backend());

// Copies a solution back onto timed instances.
std::vector<TimedInstance> to_timed(const SolveRequest& req,
                                    std::span<const Time> starts);

}  // namespace pipetile

#endif  // PIPETILE_SOLVER_H_
