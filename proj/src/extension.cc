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

#include "pipetile/extension.h"

#include "pipetile/errors.h"

namespace pipetile {

Schedule extend(const Schedule& s, int num_microbatches) {
  if (!s.repetend || s.repetend->assignment.empty())
    throw MissingAnnotation("plan has no repetend assignment to extend");
  const RepetendAnnotation& ann = *s.repetend;
  const std::vector<int>& a = ann.assignment;
  const int base = ann.nr;
  const Time period = ann.period;
  if (static_cast<int>(a.size()) != s.num_stages())
    throw InvalidArgument("repetend assignment does not match the placement");
  const bool own = ann.copy_starts.empty();
  if (!own && static_cast<int>(ann.copy_starts.size()) != s.num_stages())
    throw InvalidArgument("repetend copy starts do not match the placement");
  if (s.num_microbatches() < base)
    throw InvalidArgument("plan has fewer micro-batches than its repetend");
  if (num_microbatches < base)
    throw InvalidArgument("cannot extend below " + std::to_string(base) +
                          " micro-batches");

  const int had = s.num_microbatches() - base;  // extra copies in s
  const int want = num_microbatches - base;
  Schedule out(s.placement_ptr(), num_microbatches);
  for (int i = 0; i < s.num_stages(); ++i) {
    for (int n = 0; n < num_microbatches; ++n) {
      Time t;
      if (n < a[i]) {
        t = s.start(i, n);
      } else if (n == a[i]) {
        t = s.start(i, n);
      } else if (n <= a[i] + want) {
        t = (own ? s.start(i, a[i]) : ann.copy_starts[i]) + (n - a[i]) * period;
      } else {
        const int from = n - want + had;
        t = s.start(i, from) + (want - had) * period;
      }
      out.set_start(i, n, t);
    }
  }
  out.repetend = ann;
  return out;
}

}  // namespace pipetile
