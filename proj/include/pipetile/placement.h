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

#ifndef PIPETILE_PLACEMENT_H_
#define PIPETILE_PLACEMENT_H_

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace pipetile {

using Time = std::int64_t;
using Mem = std::int64_t;
// Bit d set <=> the block occupies device d. Placements are limited to 64
// devices.
using DeviceMask = std::uint64_t;

inline constexpr int kMaxDevices = 64;
// Capacity used for "unconstrained memory" runs. Small enough that sums of
// a few thousand deltas never overflow.
inline constexpr Mem kUnboundedMemory = Mem{1} << 40;

enum class BlockKind { kForward, kBackward, kOther };

std::string_view to_string(BlockKind kind);
BlockKind block_kind_from_string(std::string_view s);

struct BlockSpec {
  int stage_id = 0;
  std::string label;
  BlockKind kind = BlockKind::kOther;
  std::vector<int> devices;  // sorted, unique
  Time time_cost = 1;
  // Applied to every device in `devices` when the block starts.
  Mem mem_delta = 0;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct Dep {
  int from = 0;
  int to = 0;
  friend bool operator==(const Dep&, const Dep&) = default;
  friend auto operator<=>(const Dep&, const Dep&) = default;
};

// Per-micro-batch block DAG with device sets, costs and memory deltas.
// Instances are validated on construction and immutable afterwards.
class PlacementSpec {
 public:
  // Throws ValidationError naming the violated invariant.
  static PlacementSpec Create(int num_devices, Mem mem_capacity,
                              std::vector<BlockSpec> blocks,
                              std::vector<Dep> deps);

  int num_devices() const { return num_devices_; }
  Mem mem_capacity() const { return mem_capacity_; }
  int num_stages() const { return static_cast<int>(blocks_.size()); }

  const std::vector<BlockSpec>& blocks() const { return blocks_; }
  const BlockSpec& block(int stage) const { return blocks_[stage]; }
  const std::vector<Dep>& deps() const { return deps_; }
  std::span<const int> preds(int stage) const { return preds_[stage]; }
  std::span<const int> succs(int stage) const { return succs_[stage]; }
  DeviceMask device_mask(int stage) const { return masks_[stage]; }
  // Stage ids in a deterministic topological order (Kahn, smallest id first).
  const std::vector<int>& topo_order() const { return topo_; }

  // Total time of one micro-batch's blocks on device d.
  Time device_load(int d) const;
  // max_d device_load(d): no periodic schedule can beat this period.
  Time period_lower_bound() const;
  // Sum of all block costs of one micro-batch.
  Time total_cost() const;
  // Longest dependency chain of one micro-batch, block costs included.
  Time critical_path() const;
  // Net memory change of one full block set on device d.
  Mem net_mem_delta(int d) const;

  PlacementSpec with_memory(Mem capacity) const;

  friend bool operator==(const PlacementSpec& a, const PlacementSpec& b) {
    return a.num_devices_ == b.num_devices_ &&
           a.mem_capacity_ == b.mem_capacity_ && a.blocks_ == b.blocks_ &&
           a.deps_ == b.deps_;
  }

 private:
  PlacementSpec() = default;

  int num_devices_ = 0;
  Mem mem_capacity_ = 0;
  std::vector<BlockSpec> blocks_;
  std::vector<Dep> deps_;
  std::vector<std::vector<int>> preds_;
  std::vector<std::vector<int>> succs_;
  std::vector<DeviceMask> masks_;
  std::vector<int> topo_;
};

// Block costs used by the built-in shapes.
struct CostModel {
  Time forward = 1;
  Time backward = 3;
  Mem forward_mem = 1;
  Mem backward_mem = -1;

  // Training with recompute: backward costs three forwards.
  static CostModel Recompute() { return {}; }
  // forward=1 / backward=2.
  static CostModel Plain() { return {1, 2, 1, -1}; }

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

enum class Shape { kVShape, kXShape, kMShape, kNNShape, kKShape };

std::string_view to_string(Shape shape);
Shape shape_from_string(std::string_view s);

// Builds one of the canonical placement topologies on `num_devices` devices:
//
//   vshape   f0..f{D-1} -> b{D-1}..b0, (f_d, b_d) on device d.
//   xshape   two vshape chains with opposite device orders bundled into one
//            unit micro-batch (K = 4D). Needs even D.
//   mshape   E(all) -> f0..f{D-1} -> H(all), mirrored backward.
//   nnshape  E(all) -> e0..e{D-1} -> g0..g{D-1}, mirrored backward. Encoder
//            and decoder chains walk the devices in the same direction.
//   kshape   two chains on the device halves joining a full-device cross
//            block, mirrored backward. Needs even D.
//
// Memory capacity is kUnboundedMemory unless `mem_capacity` is given.
PlacementSpec make_shape(Shape shape, int num_devices,
                         const CostModel& costs = CostModel::Recompute(),
                         Mem mem_capacity = kUnboundedMemory);

nlohmann::json placement_to_json(const PlacementSpec& p);
// Throws ParseError on schema problems, ValidationError on invariants.
PlacementSpec placement_from_json(const nlohmann::json& j);

PlacementSpec load_placement(const std::string& path);
void save_placement(const PlacementSpec& p, const std::string& path);

// Accepts a file path or a built-in pseudo-path `shape:<name>:<D>` with an
// optional cost suffix `:<fwd>/<bwd>`, e.g. `shape:vshape:4:1/2`.
PlacementSpec resolve_placement(const std::string& path_or_shape);

}  // namespace pipetile

#endif  // PIPETILE_PLACEMENT_H_
