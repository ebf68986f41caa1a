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

#ifndef PIPETILE_SIMULATOR_H_
#define PIPETILE_SIMULATOR_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "pipetile/program.h"

namespace pipetile {

struct SimConfig {
  Time comm_cost = 0;  // per transfer
  bool trace = false;
};

// One line of the event trace: {"t", "device", "event", ...}. Events are
// exec_start, exec_end, send, recv, wait, wait_done, transfer_start and
// transfer_end; "lane" is "compute" or "transfer". Exec events carry the
// block kind, transfer events the receiving device as peer.
struct TraceEvent {
  Time t = 0;
  int device = 0;
  std::string event;
  int stage = -1;
  int mb = -1;
  std::string kind;
  int peer = -1;
  bool has_tag = false;
  TensorTag tag;
};

nlohmann::json trace_event_to_json(const TraceEvent& e);
TraceEvent trace_event_from_json(const nlohmann::json& j);

struct SimReport {
  Time makespan = 0;
  std::vector<Time> busy;
  std::vector<Time> idle;
  std::vector<Time> wait;  // part of idle spent blocked on communication
  std::vector<Mem> peak_memory;
  bool deadlock = false;
  std::string blocked_state;  // one line per stuck device
  std::vector<TraceEvent> trace;
};

// Runs the programs. Blocking transfers are rendezvous: both sides hold
// for comm_cost once both have arrived. Non-blocking sends and receives
// post to the transfer lanes and return at once; a transfer runs when both
// sides posted and both devices' lanes are free, in posting order. A wait
// blocks until its transfer ends. A block on several devices starts once
// all of them reach it. Throws MalformedProgram when sends and receives do
// not pair up.
SimReport simulate(const DevicePrograms& progs, const SimConfig& cfg = {});

}  // namespace pipetile

#endif  // PIPETILE_SIMULATOR_H_
