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

#ifndef PIPETILE_SCHEDULE_H_
#define PIPETILE_SCHEDULE_H_

#include <compare>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipetile/placement.h"

namespace pipetile {

// Exact non-negative fraction, kept reduced.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational Of(std::int64_t n, std::int64_t d);
  double to_double() const { return static_cast<double>(num) / den; }
  std::string to_string() const;

  friend bool operator==(const Rational&, const Rational&) = default;
  friend std::strong_ordering operator<=>(const Rational& a,
                                          const Rational& b) {
    return a.num * b.den <=> b.num * a.den;
  }
};

struct BlockInstance {
  int stage = 0;
  int mb = 0;
  friend auto operator<=>(const BlockInstance&, const BlockInstance&) = default;
};

struct TimedInstance {
  int stage = 0;
  int mb = 0;
  Time start = 0;
  friend bool operator==(const TimedInstance&, const TimedInstance&) = default;
};

// Marks one repetend copy inside a plan.
//
// `assignment[i]` is the micro-batch index of stage i inside the annotated
// copy; when present the plan can be extended structurally. Plans produced by
// generators without a copy structure carry only the steady-state window.
struct RepetendAnnotation {
  Time start = 0;  // first start of the annotated copy
  Time end = 0;    // last end of the annotated copy
  Time period = 1;
  int nr = 1;      // micro-batches in the base (un-extended) plan
  std::vector<int> assignment;
  // Periodic starts of the annotated copy, one per stage, when the plan runs
  // that copy earlier than the pattern. Later copies follow these. Empty
  // means the plan's own starts.
  std::vector<Time> copy_starts;

  friend bool operator==(const RepetendAnnotation&,
                         const RepetendAnnotation&) = default;
};

// Start-time assignment for every (stage, micro-batch) instance.
class Schedule {
 public:
  static constexpr Time kUnset = -1;

  Schedule(std::shared_ptr<const PlacementSpec> placement,
           int num_microbatches);

  const PlacementSpec& placement() const { return *placement_; }
  const std::shared_ptr<const PlacementSpec>& placement_ptr() const {
    return placement_;
  }
  int num_microbatches() const { return num_microbatches_; }
  int num_stages() const { return placement_->num_stages(); }

  Time start(int stage, int mb) const {
    return starts_[static_cast<size_t>(stage) * num_microbatches_ + mb];
  }
  Time end(int stage, int mb) const {
    return start(stage, mb) + placement_->block(stage).time_cost;
  }
  void set_start(int stage, int mb, Time t) {
    starts_[static_cast<size_t>(stage) * num_microbatches_ + mb] = t;
  }
  bool complete() const;
  Time makespan() const;

  std::vector<TimedInstance> instances() const;

  std::optional<RepetendAnnotation> repetend;

  friend bool operator==(const Schedule& a, const Schedule& b) {
    return *a.placement_ == *b.placement_ &&
           a.num_microbatches_ == b.num_microbatches_ &&
           a.starts_ == b.starts_ && a.repetend == b.repetend;
  }

 private:
  std::shared_ptr<const PlacementSpec> placement_;
  int num_microbatches_;
  std::vector<Time> starts_;
};

enum class ViolationKind { kStructure, kExclusivity, kMemory, kDependency };

struct Violation {
  ViolationKind kind;
  std::string message;
  std::vector<BlockInstance> instances;
};

// Checks a set of timed instances against the three constraint families:
// exclusivity on intersecting device sets, memory (deltas applied at block
// start on top of `initial_memory`, capacity taken from the placement) and
// dependencies between instances that are both present.
std::vector<Violation> validate_instances(
    const PlacementSpec& p, std::span<const TimedInstance> instances,
    std::span<const Mem> initial_memory = {});

// Empty result means the schedule is valid.
std::vector<Violation> validate_schedule(const Schedule& s);

struct ScheduleMetrics {
  Time makespan = 0;
  std::vector<Time> per_device_busy;
  std::vector<Mem> peak_memory;
  Rational bubble_rate_total;
  std::optional<Rational> bubble_rate_steady;
};

// Expects a valid schedule. The steady-state rate is filled in when the
// schedule carries a repetend annotation.
ScheduleMetrics compute_metrics(const Schedule& s);

// Throws MissingAnnotation when the schedule has no repetend annotation.
Rational steady_bubble_rate(const Schedule& s);

// Per-device peak of the running memory sum (deltas at block start).
std::vector<Mem> peak_memory(const PlacementSpec& p,
                             std::span<const TimedInstance> instances,
                             std::span<const Mem> initial_memory = {});

// Relabels micro-batch indices per stage so that start times increase with
// the index. The result is valid whenever the input is, with equal makespan.
Schedule canonicalize_microbatch_order(const Schedule& s);

// Starts every block as early as its dependencies and its devices' previous
// blocks allow, keeping each device's block order. Memory sums follow the
// order alone, so a valid input stays valid. The annotation is copied as is.
Schedule left_justify(const Schedule& s);

nlohmann::json schedule_to_json(const Schedule& s,
                                const std::string& placement_path = "");
// Inline placements are parsed directly; string placements are resolved as
// file paths (relative to `base_dir` when not found as given) or shape
// pseudo-paths.
Schedule schedule_from_json(const nlohmann::json& j,
                            const std::string& base_dir = "");
Schedule load_plan(const std::string& path);
void save_plan(const Schedule& s, const std::string& path);

}  // namespace pipetile

#endif  // PIPETILE_SCHEDULE_H_
