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

#include "pipetile/simulator.h"

#include <algorithm>
#include <map>
#include <queue>
#include <sstream>
#include <tuple>

#include "pipetile/errors.h"

namespace pipetile {

using nlohmann::json;

json trace_event_to_json(const TraceEvent& e) {
  json j;
  j["t"] = e.t;
  j["device"] = e.device;
  j["event"] = e.event;
  bool transfer = e.event.starts_with("transfer");
  j["lane"] = transfer ? "transfer" : "compute";
  if (e.stage >= 0) j["stage"] = e.stage;
  if (e.mb >= 0) j["mb"] = e.mb;
  if (!e.kind.empty()) j["kind"] = e.kind;
  if (e.peer >= 0) j["peer"] = e.peer;
  if (e.has_tag) j["tag"] = {e.tag.producer, e.tag.consumer, e.tag.mb};
  return j;
}

TraceEvent trace_event_from_json(const json& j) {
  try {
    TraceEvent e;
    e.t = j.at("t").get<Time>();
    e.device = j.at("device").get<int>();
    e.event = j.at("event").get<std::string>();
    e.stage = j.value("stage", -1);
    e.mb = j.value("mb", -1);
    e.kind = j.value("kind", std::string());
    e.peer = j.value("peer", -1);
    if (j.contains("tag")) {
      const auto& tag = j.at("tag");
      e.has_tag = true;
      e.tag = {tag.at(0).get<int>(), tag.at(1).get<int>(), tag.at(2).get<int>()};
    }
    return e;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("trace: ") + ex.what());
  }
}

namespace {

std::string describe(const Instruction& ins) {
  std::ostringstream os;
  os << to_string(ins.op);
  if (ins.op == Op::kExec) {
    os << " stage=" << ins.stage << " mb=" << ins.mb;
  } else {
    os << " tag=[" << ins.tag.producer << "," << ins.tag.consumer << ","
       << ins.tag.mb << "]";
    if (ins.op != Op::kWait) os << " peer=" << ins.peer;
  }
  return os.str();
}

// (src, dst, tag)
using TransferKey = std::tuple<int, int, TensorTag>;

void check_programs(const DevicePrograms& progs) {
  const PlacementSpec& p = *progs.placement;
  if (static_cast<int>(progs.devices.size()) != p.num_devices()) {
    throw MalformedProgram("program count differs from device count");
  }
  std::map<TransferKey, int> sends, recvs;
  std::map<TransferKey, bool> send_mode, recv_mode;
  std::map<std::pair<int, TensorTag>, int> recv_at;
  std::map<std::pair<int, BlockInstance>, int> execs;
  for (int d = 0; d < p.num_devices(); ++d) {
    for (const auto& ins : progs.devices[d]) {
      switch (ins.op) {
        case Op::kExec: {
          if (ins.stage < 0 || ins.stage >= p.num_stages() || ins.mb < 0 ||
              ins.mb >= progs.num_microbatches) {
            throw MalformedProgram("exec out of range on device " +
                                   std::to_string(d));
          }
          const auto& devs = p.block(ins.stage).devices;
          if (!std::binary_search(devs.begin(), devs.end(), d)) {
            throw MalformedProgram("device " + std::to_string(d) +
                                   " runs a block not placed on it: " +
                                   describe(ins));
          }
          if (++execs[{d, BlockInstance{ins.stage, ins.mb}}] > 1) {
            throw MalformedProgram("duplicate " + describe(ins));
          }
          break;
        }
        case Op::kSend:
        case Op::kRecv: {
          if (ins.peer < 0 || ins.peer >= p.num_devices() || ins.peer == d) {
            throw MalformedProgram("bad peer in " + describe(ins));
          }
          if (ins.op == Op::kSend) {
            TransferKey k{d, ins.peer, ins.tag};
            if (++sends[k] > 1) {
              throw MalformedProgram("duplicate " + describe(ins));
            }
            send_mode[k] = ins.blocking;
          } else {
            TransferKey k{ins.peer, d, ins.tag};
            if (++recvs[k] > 1) {
              throw MalformedProgram("duplicate " + describe(ins));
            }
            recv_mode[k] = ins.blocking;
            recv_at[{d, ins.tag}]++;
          }
          break;
        }
        case Op::kWait:
          break;
      }
    }
  }
  for (const auto& [k, n] : sends) {
    if (!recvs.count(k)) {
      throw MalformedProgram("send without matching receive on device " +
                             std::to_string(std::get<0>(k)));
    }
    if (send_mode[k] != recv_mode[k]) {
      throw MalformedProgram("blocking mode differs between send and receive");
    }
  }
  for (const auto& [k, n] : recvs) {
    if (!sends.count(k)) {
      throw MalformedProgram("receive without matching send on device " +
                             std::to_string(std::get<1>(k)));
    }
  }
  for (int d = 0; d < p.num_devices(); ++d) {
    for (const auto& ins : progs.devices[d]) {
      if (ins.op != Op::kWait) continue;
      auto it = recv_at.find({d, ins.tag});
      if (it == recv_at.end()) {
        throw MalformedProgram("wait without a receive on device " +
                               std::to_string(d) + ": " + describe(ins));
      }
      if (it->second > 1) {
        throw MalformedProgram("ambiguous wait on device " +
                               std::to_string(d) + ": " + describe(ins));
      }
    }
  }
  for (const auto& [key, n] : execs) {
    const auto& devs = p.block(key.second.stage).devices;
    for (int e : devs) {
      if (!execs.count({e, key.second})) {
        throw MalformedProgram("block stage=" +
                               std::to_string(key.second.stage) +
                               " mb=" + std::to_string(key.second.mb) +
                               " missing on device " + std::to_string(e));
      }
    }
  }
}

enum class State { kRunning, kCollective, kSend, kRecv, kTensor, kDone };

class Simulator {
 public:
  Simulator(const DevicePrograms& progs, const SimConfig& cfg)
      : progs_(progs), p_(*progs.placement), cfg_(cfg) {
    int n = p_.num_devices();
    pc_.assign(n, 0);
    state_.assign(n, State::kRunning);
    since_.assign(n, 0);
    finish_.assign(n, 0);
    lane_free_.assign(n, 0);
    level_.assign(n, 0);
    rep_.busy.assign(n, 0);
    rep_.wait.assign(n, 0);
    rep_.peak_memory.assign(n, 0);
  }

  SimReport run() {
    for (int d = 0; d < p_.num_devices(); ++d) push_resume(d, 0);
    Time now = 0;
    while (!events_.empty()) {
      auto [t, kind, id] = events_.top();
      events_.pop();
      now = t;
      if (kind == 0) {
        transfer_end(id, t);
      } else {
        step(static_cast<int>(id), t);
      }
    }
    rep_.makespan = 0;
    for (int d = 0; d < p_.num_devices(); ++d) {
      if (state_[d] != State::kDone) {
        rep_.deadlock = true;
        rep_.blocked_state += "device " + std::to_string(d) + " pc " +
                              std::to_string(pc_[d]) + ": " +
                              describe(progs_.devices[d][pc_[d]]) + "\n";
      }
      rep_.makespan = std::max(rep_.makespan, finish_[d]);
    }
    if (rep_.deadlock) rep_.makespan = std::max(rep_.makespan, now);
    rep_.idle.resize(p_.num_devices());
    for (int d = 0; d < p_.num_devices(); ++d) {
      rep_.idle[d] = rep_.makespan - rep_.busy[d];
    }
    std::stable_sort(
        rep_.trace.begin(), rep_.trace.end(),
        [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
    return std::move(rep_);
  }

 private:
  struct Transfer {
    int src, dst;
    TensorTag tag;
    Time send_post = -1, recv_post = -1;
    bool started = false, done = false;
  };

  void push_resume(int d, Time t) { events_.push({t, 1, d}); }

  void trace(Time t, int d, const char* event, int stage, int mb) {
    if (!cfg_.trace) return;
    TraceEvent e;
    e.t = t;
    e.device = d;
    e.event = event;
    e.stage = stage;
    e.mb = mb;
    e.kind = to_string(p_.block(stage).kind);
    rep_.trace.push_back(std::move(e));
  }
  void trace(Time t, int d, const char* event, int peer,
             const TensorTag& tag) {
    if (!cfg_.trace) return;
    TraceEvent e;
    e.t = t;
    e.device = d;
    e.event = event;
    e.peer = peer;
    e.has_tag = true;
    e.tag = tag;
    rep_.trace.push_back(std::move(e));
  }

  const Instruction& current(int d) const {
    return progs_.devices[d][pc_[d]];
  }

  void block(int d, State s, Time t) {
    state_[d] = s;
    since_[d] = t;
  }

  // Resumes device d, paying wait accounting for the time it was blocked.
  void unblock(int d, Time t, bool comm) {
    if (comm) rep_.wait[d] += t - since_[d];
    state_[d] = State::kRunning;
  }

  void start_exec(int d, const Instruction& ins, Time t) {
    const BlockSpec& b = p_.block(ins.stage);
    level_[d] += b.mem_delta;
    rep_.peak_memory[d] = std::max(rep_.peak_memory[d], level_[d]);
    rep_.busy[d] += b.time_cost;
    trace(t, d, "exec_start", ins.stage, ins.mb);
    trace(t + b.time_cost, d, "exec_end", ins.stage, ins.mb);
    pc_[d]++;
    finish_[d] = t + b.time_cost;
    push_resume(d, t + b.time_cost);
  }

  void step(int d, Time t) {
    if (state_[d] != State::kRunning) return;
    const auto& prog = progs_.devices[d];
    while (true) {
      if (pc_[d] == prog.size()) {
        state_[d] = State::kDone;
        finish_[d] = std::max(finish_[d], t);
        return;
      }
      const Instruction& ins = current(d);
      switch (ins.op) {
        case Op::kExec: {
          const auto& devs = p_.block(ins.stage).devices;
          if (devs.size() == 1) {
            start_exec(d, ins, t);
            return;
          }
          auto& arrived = collective_[{ins.stage, ins.mb}];
          arrived.push_back(d);
          if (arrived.size() < devs.size()) {
            block(d, State::kCollective, t);
            return;
          }
          for (int e : devs) {
            if (e != d) unblock(e, t, false);
            start_exec(e, current(e), t);
          }
          collective_.erase({ins.stage, ins.mb});
          return;
        }
        case Op::kSend:
        case Op::kRecv: {
          if (!ins.blocking) {
            post(d, ins, t);
            pc_[d]++;
            continue;
          }
          int q = ins.peer;
          State want = ins.op == Op::kSend ? State::kRecv : State::kSend;
          if (state_[q] == want && current(q).peer == d &&
              current(q).tag == ins.tag) {
            unblock(q, t, true);
            Time end = t + cfg_.comm_cost;
            int src = ins.op == Op::kSend ? d : q;
            int dst = ins.op == Op::kSend ? q : d;
            trace(t, src, "send", dst, ins.tag);
            trace(t, dst, "recv", src, ins.tag);
            trace(t, src, "transfer_start", dst, ins.tag);
            trace(end, src, "transfer_end", dst, ins.tag);
            for (int e : {d, q}) {
              rep_.wait[e] += cfg_.comm_cost;
              pc_[e]++;
              finish_[e] = std::max(finish_[e], end);
              push_resume(e, end);
            }
            return;
          }
          block(d, ins.op == Op::kSend ? State::kSend : State::kRecv, t);
          return;
        }
        case Op::kWait: {
          auto it = by_dst_.find({d, ins.tag});
          if (it != by_dst_.end() && transfers_[it->second].done) {
            pc_[d]++;
            continue;
          }
          block(d, State::kTensor, t);
          trace(t, d, "wait", -1, ins.tag);
          return;
        }
      }
    }
  }

  int transfer_id(int src, int dst, const TensorTag& tag) {
    auto [it, inserted] = ids_.try_emplace({src, dst, tag},
                                           static_cast<int>(transfers_.size()));
    if (inserted) {
      transfers_.push_back({src, dst, tag});
      by_dst_[{dst, tag}] = it->second;
    }
    return it->second;
  }

  void post(int d, const Instruction& ins, Time t) {
    bool send = ins.op == Op::kSend;
    int src = send ? d : ins.peer;
    int dst = send ? ins.peer : d;
    int id = transfer_id(src, dst, ins.tag);
    Transfer& tr = transfers_[id];
    (send ? tr.send_post : tr.recv_post) = t;
    trace(t, d, send ? "send" : "recv", ins.peer, ins.tag);
    if (tr.send_post < 0 || tr.recv_post < 0) return;
    Time start = std::max({t, lane_free_[src], lane_free_[dst]});
    Time end = start + cfg_.comm_cost;
    lane_free_[src] = lane_free_[dst] = end;
    tr.started = true;
    trace(start, src, "transfer_start", dst, tr.tag);
    trace(end, src, "transfer_end", dst, tr.tag);
    events_.push({end, 0, id});
  }

  void transfer_end(std::int64_t id, Time t) {
    Transfer& tr = transfers_[id];
    tr.done = true;
    int d = tr.dst;
    finish_[tr.src] = std::max(finish_[tr.src], t);
    if (state_[d] == State::kTensor && current(d).tag == tr.tag) {
      unblock(d, t, true);
      trace(t, d, "wait_done", -1, tr.tag);
      pc_[d]++;
      push_resume(d, t);
    }
  }

  const DevicePrograms& progs_;
  const PlacementSpec& p_;
  SimConfig cfg_;
  SimReport rep_;

  std::vector<size_t> pc_;
  std::vector<State> state_;
  std::vector<Time> since_;
  std::vector<Time> finish_;
  std::vector<Time> lane_free_;
  std::vector<Mem> level_;
  std::map<std::pair<int, int>, std::vector<int>> collective_;
  std::vector<Transfer> transfers_;
  std::map<TransferKey, int> ids_;
  std::map<std::pair<int, TensorTag>, int> by_dst_;
  // (time, kind, id); transfer ends (kind 0) run before device resumes.
  using Event = std::tuple<Time, int, std::int64_t>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
};

}  // namespace

SimReport simulate(const DevicePrograms& progs, const SimConfig& cfg) {
  if (!progs.placement) throw MalformedProgram("programs carry no placement");
  if (cfg.comm_cost < 0) throw InvalidArgument("comm_cost must be >= 0");
  check_programs(progs);
  return Simulator(progs, cfg).run();
}

}  // namespace pipetile
