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

#include "pipetile/program.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "pipetile/errors.h"

namespace pipetile {

using nlohmann::json;

std::string_view to_string(Op op) {
  switch (op) {
    case Op::kExec: return "exec";
    case Op::kSend: return "send";
    case Op::kRecv: return "recv";
    case Op::kWait: return "wait";
  }
  return "exec";
}

std::string_view to_string(CommMode mode) {
  return mode == CommMode::kBlocking ? "blocking" : "nonblocking";
}

CommMode comm_mode_from_string(std::string_view s) {
  if (s == "blocking") return CommMode::kBlocking;
  if (s == "nonblocking" || s == "non-blocking") return CommMode::kNonBlocking;
  throw ParseError("unknown communication mode: " + std::string(s));
}

namespace {

struct Transfer {
  int src;
  int dst;
  TensorTag tag;
};

// Routes the tensor of dep from -> to onto device pairs.
std::vector<Transfer> route(const PlacementSpec& p, int from, int to, int mb) {
  const auto& src = p.block(from).devices;
  const auto& dst = p.block(to).devices;
  std::vector<Transfer> out;
  for (size_t r = 0; r < dst.size(); ++r) {
    int d = dst[r];
    if (std::binary_search(src.begin(), src.end(), d)) continue;
    out.push_back({src[r % src.size()], d, {from, to, mb}});
  }
  return out;
}

Op op_from_string(const std::string& s) {
  if (s == "exec") return Op::kExec;
  if (s == "send") return Op::kSend;
  if (s == "recv") return Op::kRecv;
  if (s == "wait") return Op::kWait;
  throw ParseError("unknown instruction op: " + s);
}

}  // namespace

DevicePrograms emit(const Schedule& s, CommMode mode) {
  const PlacementSpec& p = s.placement();
  if (!s.complete()) throw InvalidArgument("emit: schedule is incomplete");
  const bool blocking = mode == CommMode::kBlocking;

  // Blocks are keyed at their start, transfers at their producer's end;
  // at equal times transfers come first so consumers starting then see them.
  struct Item {
    std::tuple<Time, int, int, int, int, int, int> key;
    TimedInstance inst;
    Transfer transfer;
  };
  std::vector<Item> items;
  for (const auto& inst : s.instances()) {
    int first = p.block(inst.stage).devices.front();
    items.push_back({{inst.start, 1, first, inst.stage, inst.mb, 0, 0},
                     inst,
                     {-1, -1, {}}});
    Time end = inst.start + p.block(inst.stage).time_cost;
    for (int succ : p.succs(inst.stage)) {
      for (const auto& t : route(p, inst.stage, succ, inst.mb)) {
        items.push_back(
            {{end, 0, first, inst.stage, inst.mb, succ, t.dst}, inst, t});
      }
    }
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.key < b.key; });

  DevicePrograms out;
  out.placement = s.placement_ptr();
  out.num_microbatches = s.num_microbatches();
  out.mode = mode;
  out.devices.resize(p.num_devices());

  for (const auto& item : items) {
    const auto& inst = item.inst;
    if (item.transfer.src >= 0) {
      const auto& t = item.transfer;
      out.devices[t.src].push_back({Op::kSend, -1, -1, t.tag, t.dst, blocking});
      out.devices[t.dst].push_back({Op::kRecv, -1, -1, t.tag, t.src, blocking});
      continue;
    }
    if (!blocking) {
      for (int pred : p.preds(inst.stage)) {
        for (const auto& t : route(p, pred, inst.stage, inst.mb)) {
          out.devices[t.dst].push_back({Op::kWait, -1, -1, t.tag, -1, false});
        }
      }
    }
    for (int d : p.block(inst.stage).devices) {
      out.devices[d].push_back(Instruction::Exec(inst.stage, inst.mb));
    }
  }
  return out;
}

DevicePrograms drop_backward(const DevicePrograms& progs) {
  const PlacementSpec& p = *progs.placement;
  auto backward = [&](int stage) {
    return p.block(stage).kind == BlockKind::kBackward;
  };
  DevicePrograms out = progs;
  for (auto& prog : out.devices) {
    std::erase_if(prog, [&](const Instruction& ins) {
      if (ins.op == Op::kExec) return backward(ins.stage);
      return backward(ins.tag.producer) || backward(ins.tag.consumer);
    });
  }
  return out;
}

std::vector<std::vector<BlockInstance>> exec_order(
    const DevicePrograms& progs) {
  std::vector<std::vector<BlockInstance>> out(progs.devices.size());
  for (size_t d = 0; d < progs.devices.size(); ++d) {
    for (const auto& ins : progs.devices[d]) {
      if (ins.op == Op::kExec) out[d].push_back({ins.stage, ins.mb});
    }
  }
  return out;
}

json programs_to_json(const DevicePrograms& progs) {
  json devices = json::array();
  for (const auto& prog : progs.devices) {
    json arr = json::array();
    for (const auto& ins : prog) {
      json o;
      o["op"] = to_string(ins.op);
      if (ins.op == Op::kExec) {
        o["stage"] = ins.stage;
        o["mb"] = ins.mb;
      } else {
        o["tag"] = {ins.tag.producer, ins.tag.consumer, ins.tag.mb};
        if (ins.op != Op::kWait) {
          o["peer"] = ins.peer;
          o["blocking"] = ins.blocking;
        }
      }
      arr.push_back(std::move(o));
    }
    devices.push_back(std::move(arr));
  }
  json j;
  j["placement"] = placement_to_json(*progs.placement);
  j["num_microbatches"] = progs.num_microbatches;
  j["mode"] = to_string(progs.mode);
  j["devices"] = std::move(devices);
  return j;
}

DevicePrograms programs_from_json(const json& j) {
  try {
    DevicePrograms out;
    out.placement = std::make_shared<const PlacementSpec>(
        placement_from_json(j.at("placement")));
    out.num_microbatches = j.at("num_microbatches").get<int>();
    out.mode = comm_mode_from_string(j.value("mode", std::string("blocking")));
    const auto& devices = j.at("devices");
    if (!devices.is_array() ||
        static_cast<int>(devices.size()) != out.placement->num_devices()) {
      throw ParseError("programs: one instruction list per device expected");
    }
    for (const auto& arr : devices) {
      std::vector<Instruction> prog;
      for (const auto& o : arr) {
        Instruction ins;
        ins.op = op_from_string(o.at("op").get<std::string>());
        if (ins.op == Op::kExec) {
          ins.stage = o.at("stage").get<int>();
          ins.mb = o.at("mb").get<int>();
          if (ins.stage < 0 || ins.stage >= out.placement->num_stages() ||
              ins.mb < 0 || ins.mb >= out.num_microbatches) {
            throw ParseError("programs: exec out of range");
          }
        } else {
          const auto& tag = o.at("tag");
          if (!tag.is_array() || tag.size() != 3) {
            throw ParseError("programs: tag must be [producer, consumer, mb]");
          }
          ins.tag = {tag[0].get<int>(), tag[1].get<int>(), tag[2].get<int>()};
          if (ins.op != Op::kWait) {
            ins.peer = o.at("peer").get<int>();
            if (ins.peer < 0 || ins.peer >= out.placement->num_devices()) {
              throw ParseError("programs: peer out of range");
            }
          }
          ins.blocking = o.value("blocking", ins.op != Op::kWait);
        }
        prog.push_back(ins);
      }
      out.devices.push_back(std::move(prog));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("programs: ") + e.what());
  }
}

}  // namespace pipetile
