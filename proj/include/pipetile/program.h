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

#ifndef PIPETILE_PROGRAM_H_
#define PIPETILE_PROGRAM_H_

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pipetile/placement.h"
#include "pipetile/schedule.h"

namespace pipetile {

// Identifies one tensor: the output of `producer` consumed by `consumer`,
// both for micro-batch `mb`. Unique per (sender, receiver) device pair.
struct TensorTag {
  int producer = 0;
  int consumer = 0;
  int mb = 0;
  friend auto operator<=>(const TensorTag&, const TensorTag&) = default;
};

enum class Op { kExec, kSend, kRecv, kWait };
enum class CommMode { kBlocking, kNonBlocking };

std::string_view to_string(Op op);
std::string_view to_string(CommMode mode);
CommMode comm_mode_from_string(std::string_view s);

struct Instruction {
  Op op = Op::kExec;
  int stage = -1;  // kExec
  int mb = -1;     // kExec
  TensorTag tag;   // kSend, kRecv, kWait
  int peer = -1;   // kSend, kRecv
  bool blocking = true;

  static Instruction Exec(int stage, int mb) {
    Instruction i;
    i.stage = stage;
    i.mb = mb;
    return i;
  }
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct DevicePrograms {
  std::shared_ptr<const PlacementSpec> placement;
  int num_microbatches = 0;
  CommMode mode = CommMode::kBlocking;
  std::vector<std::vector<Instruction>> devices;
};

// Lowers a valid schedule to per-device programs. Blocks are taken in
// (start, lowest device, stage, micro-batch) order; each cross-device
// dependency becomes a Send/Recv pair placed at the end of its producer's
// time slot, ahead of blocks starting at that time. A consumer
// device outside the producer's device set receives from the producer
// device of the same rank (modulo the producer's device count).
// Non-blocking mode adds a wait right before each consuming block.
DevicePrograms emit(const Schedule& s, CommMode mode = CommMode::kBlocking);

// Drops backward blocks and every transfer touching one.
DevicePrograms drop_backward(const DevicePrograms& progs);

// Per-device block order with communication erased.
std::vector<std::vector<BlockInstance>> exec_order(const DevicePrograms& progs);

nlohmann::json programs_to_json(const DevicePrograms& progs);
// Throws ParseError on schema problems.
DevicePrograms programs_from_json(const nlohmann::json& j);

}  // namespace pipetile

#endif  // PIPETILE_PROGRAM_H_
