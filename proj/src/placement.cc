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

#include "pipetile/placement.h"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "pipetile/errors.h"

namespace pipetile {
namespace {

using nlohmann::json;

std::vector<int> all_devices(int d) {
  std::vector<int> v(d);
  for (int i = 0; i < d; ++i) v[i] = i;
  return v;
}

// Accumulates blocks and deps while building a shape.
class ShapeBuilder {
 public:
  explicit ShapeBuilder(const CostModel& costs) : costs_(costs) {}

  int forward(std::string label, std::vector<int> devices) {
    return add(std::move(label), BlockKind::kForward, std::move(devices),
               costs_.forward, costs_.forward_mem);
  }
  int backward(std::string label, std::vector<int> devices) {
    return add(std::move(label), BlockKind::kBackward, std::move(devices),
               costs_.backward, costs_.backward_mem);
  }
  void dep(int a, int b) { deps_.push_back({a, b}); }
  void chain(const std::vector<int>& ids) {
    for (size_t i = 1; i < ids.size(); ++i) dep(ids[i - 1], ids[i]);
  }

  PlacementSpec finish(int num_devices, Mem capacity) {
    return PlacementSpec::Create(num_devices, capacity, std::move(blocks_),
                                 std::move(deps_));
  }

 private:
  int add(std::string label, BlockKind kind, std::vector<int> devices, Time t,
          Mem m) {
    BlockSpec b;
    b.stage_id = static_cast<int>(blocks_.size());
    b.label = std::move(label);
    b.kind = kind;
    b.devices = std::move(devices);
    b.time_cost = t;
    b.mem_delta = m;
    blocks_.push_back(std::move(b));
    return blocks_.back().stage_id;
  }

  CostModel costs_;
  std::vector<BlockSpec> blocks_;
  std::vector<Dep> deps_;
};

// Appends a forward chain over `devs` followed by its mirrored backward
// chain; returns {forward ids, backward ids (in execution order)}.
std::pair<std::vector<int>, std::vector<int>> add_vchain(
    ShapeBuilder& b, const std::string& prefix, const std::vector<int>& devs) {
  std::vector<int> fwd, bwd;
  for (size_t i = 0; i < devs.size(); ++i)
    fwd.push_back(b.forward("f" + prefix + std::to_string(i), {devs[i]}));
  for (size_t i = devs.size(); i-- > 0;)
    bwd.push_back(b.backward("b" + prefix + std::to_string(i), {devs[i]}));
  return {fwd, bwd};
}

}  // namespace

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kForward:
      return "forward";
    case BlockKind::kBackward:
      return "backward";
    case BlockKind::kOther:
      return "other";
  }
  return "other";
}

BlockKind block_kind_from_string(std::string_view s) {
  if (s == "forward") return BlockKind::kForward;
  if (s == "backward") return BlockKind::kBackward;
  if (s == "other") return BlockKind::kOther;
  throw ParseError("unknown block kind '" + std::string(s) + "'");
}

std::string_view to_string(Shape shape) {
  switch (shape) {
    case Shape::kVShape:
      return "vshape";
    case Shape::kXShape:
      return "xshape";
    case Shape::kMShape:
      return "mshape";
    case Shape::kNNShape:
      return "nnshape";
    case Shape::kKShape:
      return "kshape";
  }
  return "vshape";
}

Shape shape_from_string(std::string_view s) {
  for (Shape sh : {Shape::kVShape, Shape::kXShape, Shape::kMShape,
                   Shape::kNNShape, Shape::kKShape}) {
    if (to_string(sh) == s) return sh;
  }
  throw UnsupportedShape("unknown shape '" + std::string(s) + "'");
}

PlacementSpec PlacementSpec::Create(int num_devices, Mem mem_capacity,
                                    std::vector<BlockSpec> blocks,
                                    std::vector<Dep> deps) {
  if (num_devices < 1 || num_devices > kMaxDevices)
    throw ValidationError("device count must be in [1, 64]");
  if (mem_capacity < 1)
    throw ValidationError("memory capacity must be positive");
  if (blocks.empty()) throw ValidationError("placement has no blocks");

  const int k = static_cast<int>(blocks.size());
  std::sort(blocks.begin(), blocks.end(),
            [](const BlockSpec& a, const BlockSpec& b) {
              return a.stage_id < b.stage_id;
            });
  for (int i = 0; i < k; ++i) {
    BlockSpec& b = blocks[i];
    if (b.stage_id != i) {
      if (i > 0 && blocks[i - 1].stage_id == b.stage_id)
        throw ValidationError("duplicate stage id " +
                              std::to_string(b.stage_id));
      throw ValidationError("stage ids must be exactly 0..K-1");
    }
    if (b.time_cost < 1)
      throw ValidationError("block " + std::to_string(i) +
                            ": time cost must be >= 1");
    if (b.devices.empty())
      throw ValidationError("block " + std::to_string(i) +
                            ": device set is empty");
    std::sort(b.devices.begin(), b.devices.end());
    b.devices.erase(std::unique(b.devices.begin(), b.devices.end()),
                    b.devices.end());
    for (int d : b.devices) {
      if (d < 0 || d >= num_devices)
        throw ValidationError("block " + std::to_string(i) +
                              ": device id out of range (" +
                              std::to_string(d) + ")");
    }
  }

  std::sort(deps.begin(), deps.end());
  deps.erase(std::unique(deps.begin(), deps.end()), deps.end());

  PlacementSpec p;
  p.num_devices_ = num_devices;
  p.mem_capacity_ = mem_capacity;
  p.preds_.assign(k, {});
  p.succs_.assign(k, {});
  for (const Dep& e : deps) {
    if (e.from < 0 || e.from >= k || e.to < 0 || e.to >= k)
      throw ValidationError("dependency references unknown stage (" +
                            std::to_string(e.from) + "->" +
                            std::to_string(e.to) + ")");
    if (e.from == e.to)
      throw ValidationError("dependency cycle at stage " +
                            std::to_string(e.from));
    p.succs_[e.from].push_back(e.to);
    p.preds_[e.to].push_back(e.from);
  }

  std::vector<int> indeg(k);
  for (int i = 0; i < k; ++i) indeg[i] = static_cast<int>(p.preds_[i].size());
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < k; ++i)
    if (indeg[i] == 0) ready.push(i);
  while (!ready.empty()) {
    int u = ready.top();
    ready.pop();
    p.topo_.push_back(u);
    for (int v : p.succs_[u])
      if (--indeg[v] == 0) ready.push(v);
  }
  if (static_cast<int>(p.topo_.size()) != k)
    throw ValidationError("dependency cycle among stages");

  for (const BlockSpec& b : blocks) {
    DeviceMask m = 0;
    for (int d : b.devices) m |= DeviceMask{1} << d;
    p.masks_.push_back(m);
  }
  p.blocks_ = std::move(blocks);
  p.deps_ = std::move(deps);
  return p;
}

Time PlacementSpec::device_load(int d) const {
  Time t = 0;
  for (int i = 0; i < num_stages(); ++i)
    if (masks_[i] >> d & 1) t += blocks_[i].time_cost;
  return t;
}

Time PlacementSpec::period_lower_bound() const {
  Time best = 0;
  for (int d = 0; d < num_devices_; ++d) best = std::max(best, device_load(d));
  return best;
}

Time PlacementSpec::total_cost() const {
  Time t = 0;
  for (const BlockSpec& b : blocks_) t += b.time_cost;
  return t;
}

Time PlacementSpec::critical_path() const {
  std::vector<Time> finish(num_stages(), 0);
  Time best = 0;
  for (int u : topo_) {
    Time start = 0;
    for (int p : preds_[u]) start = std::max(start, finish[p]);
    finish[u] = start + blocks_[u].time_cost;
    best = std::max(best, finish[u]);
  }
  return best;
}

Mem PlacementSpec::net_mem_delta(int d) const {
  Mem m = 0;
  for (int i = 0; i < num_stages(); ++i)
    if (masks_[i] >> d & 1) m += blocks_[i].mem_delta;
  return m;
}

PlacementSpec PlacementSpec::with_memory(Mem capacity) const {
  if (capacity < 1) throw ValidationError("memory capacity must be positive");
  PlacementSpec p = *this;
  p.mem_capacity_ = capacity;
  return p;
}

PlacementSpec make_shape(Shape shape, int num_devices, const CostModel& costs,
                         Mem mem_capacity) {
  const int d = num_devices;
  if (d < 2)
    throw UnsupportedShape("shapes need at least 2 devices");
  if ((shape == Shape::kXShape || shape == Shape::kKShape) && d % 2 != 0)
    throw UnsupportedShape(std::string(to_string(shape)) +
                           " needs an even device count");
  ShapeBuilder b(costs);
  const std::vector<int> down = all_devices(d);
  switch (shape) {
    case Shape::kVShape: {
      auto [fwd, bwd] = add_vchain(b, "", down);
      fwd.insert(fwd.end(), bwd.begin(), bwd.end());
      b.chain(fwd);
      break;
    }
    case Shape::kXShape: {
      std::vector<int> up(down.rbegin(), down.rend());
      for (const auto& [prefix, devs] :
           {std::pair{std::string("d"), down}, std::pair{std::string("u"), up}}) {
        auto [fwd, bwd] = add_vchain(b, prefix, devs);
        fwd.insert(fwd.end(), bwd.begin(), bwd.end());
        b.chain(fwd);
      }
      break;
    }
    case Shape::kMShape: {
      std::vector<int> order;
      order.push_back(b.forward("Ef", down));
      for (int i = 0; i < d; ++i)
        order.push_back(b.forward("f" + std::to_string(i), {i}));
      order.push_back(b.forward("Hf", down));
      order.push_back(b.backward("Hb", down));
      for (int i = d; i-- > 0;)
        order.push_back(b.backward("b" + std::to_string(i), {i}));
      order.push_back(b.backward("Eb", down));
      b.chain(order);
      break;
    }
    case Shape::kNNShape: {
      std::vector<int> order;
      order.push_back(b.forward("Ef", down));
      for (int i = 0; i < d; ++i)
        order.push_back(b.forward("fe" + std::to_string(i), {i}));
      for (int i = 0; i < d; ++i)
        order.push_back(b.forward("fd" + std::to_string(i), {i}));
      for (int i = d; i-- > 0;)
        order.push_back(b.backward("bd" + std::to_string(i), {i}));
      for (int i = d; i-- > 0;)
        order.push_back(b.backward("be" + std::to_string(i), {i}));
      order.push_back(b.backward("Eb", down));
      b.chain(order);
      break;
    }
    case Shape::kKShape: {
      const int half = d / 2;
      std::vector<int> left(down.begin(), down.begin() + half);
      std::vector<int> right(down.begin() + half, down.end());
      std::vector<int> lf, rf;
      for (int i = 0; i < half; ++i)
        lf.push_back(b.forward("fl" + std::to_string(i), {left[i]}));
      for (int i = 0; i < half; ++i)
        rf.push_back(b.forward("fr" + std::to_string(i), {right[i]}));
      const int xf = b.forward("Xf", down);
      const int xb = b.backward("Xb", down);
      std::vector<int> lb, rb;
      for (int i = half; i-- > 0;)
        lb.push_back(b.backward("bl" + std::to_string(i), {left[i]}));
      for (int i = half; i-- > 0;)
        rb.push_back(b.backward("br" + std::to_string(i), {right[i]}));
      b.chain(lf);
      b.chain(rf);
      b.dep(lf.back(), xf);
      b.dep(rf.back(), xf);
      b.dep(xf, xb);
      b.dep(xb, lb.front());
      b.dep(xb, rb.front());
      b.chain(lb);
      b.chain(rb);
      break;
    }
  }
  return b.finish(d, mem_capacity);
}

json placement_to_json(const PlacementSpec& p) {
  json blocks = json::array();
  for (const BlockSpec& b : p.blocks()) {
    blocks.push_back({{"id", b.stage_id},
                      {"label", b.label},
                      {"kind", std::string(to_string(b.kind))},
                      {"devices", b.devices},
                      {"time", b.time_cost},
                      {"memory", b.mem_delta}});
  }
  json deps = json::array();
  for (const Dep& e : p.deps()) deps.push_back({e.from, e.to});
  return {{"devices", p.num_devices()},
          {"memory", p.mem_capacity()},
          {"blocks", std::move(blocks)},
          {"deps", std::move(deps)}};
}

PlacementSpec placement_from_json(const json& j) {
  std::vector<BlockSpec> blocks;
  std::vector<Dep> deps;
  int devices = 0;
  Mem memory = 0;
  try {
    devices = j.at("devices").get<int>();
    memory = j.at("memory").get<Mem>();
    for (const json& jb : j.at("blocks")) {
      BlockSpec b;
      b.stage_id = jb.at("id").get<int>();
      b.label = jb.value("label", std::string{});
      b.kind = block_kind_from_string(jb.value("kind", std::string("other")));
      b.devices = jb.at("devices").get<std::vector<int>>();
      b.time_cost = jb.at("time").get<Time>();
      b.mem_delta = jb.value("memory", Mem{0});
      blocks.push_back(std::move(b));
    }
    if (j.contains("deps")) {
      for (const json& e : j.at("deps")) {
        if (!e.is_array() || e.size() != 2)
          throw ParseError("each dep must be a pair [from, to]");
        deps.push_back({e[0].get<int>(), e[1].get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("placement: ") + e.what());
  }
  return PlacementSpec::Create(devices, memory, std::move(blocks),
                               std::move(deps));
}

PlacementSpec load_placement(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open placement file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  return placement_from_json(j);
}

void save_placement(const PlacementSpec& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << placement_to_json(p).dump(2) << "\n";
}

PlacementSpec resolve_placement(const std::string& spec) {
  constexpr std::string_view kPrefix = "shape:";
  if (spec.rfind(kPrefix, 0) != 0) return load_placement(spec);
  std::vector<std::string> parts;
  std::stringstream ss(spec.substr(kPrefix.size()));
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() < 2 || parts.size() > 3)
    throw ParseError("expected shape:<name>:<devices>[:<fwd>/<bwd>], got '" +
                     spec + "'");
  CostModel costs;
  int devices = 0;
  try {
    devices = std::stoi(parts[1]);
    if (parts.size() == 3) {
      const auto slash = parts[2].find('/');
      if (slash == std::string::npos)
        throw ParseError("cost suffix must look like 1/3");
      costs.forward = std::stoll(parts[2].substr(0, slash));
      costs.backward = std::stoll(parts[2].substr(slash + 1));
    }
  } catch (const std::logic_error&) {
    throw ParseError("malformed shape pseudo-path '" + spec + "'");
  }
  return make_shape(shape_from_string(parts[0]), devices, costs);
}

}  // namespace pipetile
