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

#ifndef PIPETILE_BASELINES_H_
#define PIPETILE_BASELINES_H_

#include <memory>
#include <vector>

#include "pipetile/placement.h"
#include "pipetile/schedule.h"

namespace pipetile {

// Times fixed per-device block orders as early as possible. Blocks on
// several devices appear in each of their devices' lists. Throws
// InvalidArgument if the orders deadlock or miss instances.
Schedule time_device_orders(std::shared_ptr<const PlacementSpec> p,
                            int num_microbatches,
                            const std::vector<std::vector<BlockInstance>>& orders);

// Finds the periodic steady state of a generated plan and annotates its
// first regular repetend copy. `reference` is the same generator run with
// more micro-batches; the copy structure found there is applied to `s` when
// `s` is long enough to contain it. Otherwise only the window is recorded.
void annotate_steady_state(Schedule& s, const Schedule& reference);

// One-forward-one-backward on a vshape placement. Needs N >= D.
Schedule gen_1f1b(int num_devices, int num_microbatches,
                  const CostModel& costs = CostModel::Recompute());

// All forwards, then all backwards, on a vshape placement.
Schedule gen_gpipe(int num_devices, int num_microbatches,
                   const CostModel& costs = CostModel::Recompute());

// Bidirectional pipelines on the xshape placement. One xshape micro-batch
// carries one micro-batch of each direction, so the plan has N / 2 of them.
// Basic units of D micro-batches run back to back. Needs even D and N.
Schedule gen_chimera(int num_devices, int num_microbatches,
                     const CostModel& costs = CostModel::Recompute());

// 1F1B over the single-device chain stages with each full-device block
// placed next to its chain neighbour: forward ones right after the
// preceding chain stage, backward ones right before the following one.
// Throws UnsupportedPlacement when the chain stages are not totally ordered.
Schedule gen_1f1b_plus(const PlacementSpec& p, int num_microbatches);

}  // namespace pipetile

#endif  // PIPETILE_BASELINES_H_
