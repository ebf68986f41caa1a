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

#ifndef PIPETILE_RENDER_H_
#define PIPETILE_RENDER_H_

#include <optional>
#include <string>
#include <vector>

#include "pipetile/schedule.h"
#include "pipetile/simulator.h"

namespace pipetile {

enum class BarKind { kForward, kBackward, kOther, kTransfer };

struct Bar {
  Time start = 0;
  Time end = 0;
  BarKind kind = BarKind::kOther;
  std::string label;
};

struct GanttRow {
  std::string name;
  std::vector<Bar> bars;
};

// Device rows for a plan or a simulator trace. `window` marks the annotated
// repetend copy.
struct Gantt {
  std::string title;
  std::vector<GanttRow> rows;
  Time horizon = 0;
  std::optional<std::pair<Time, Time>> window;
};

// Throws ParseError for a plan without entries.
Gantt gantt_from_plan(const Schedule& s);
// One compute row per device plus a transfer row for every device that
// sends or receives with nonzero duration. Throws ParseError on an empty
// trace.
Gantt gantt_from_trace(const std::vector<TraceEvent>& trace);

// Fixed-width text chart. Forward blocks are drawn as [n  ], backward
// blocks as {n==}, other blocks as (n  ), transfers as <n~~> and idle time
// as dots, with n the micro-batch index.
std::string render_text(const Gantt& g);
std::string render_svg(const Gantt& g);

}  // namespace pipetile

#endif  // PIPETILE_RENDER_H_
