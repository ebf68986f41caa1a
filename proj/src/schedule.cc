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

#include "pipetile/schedule.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "pipetile/errors.h"

namespace pipetile {
namespace {

using nlohmann::json;

std::string describe(const PlacementSpec& p, int stage, int mb) {
  const std::string& label = p.block(stage).label;
  std::ostringstream os;
  os << (label.empty() ? "B" + std::to_string(stage) : label) << "^" << mb;
  return os.str();
}

// Busy time of the given instances on each device.
std::vector<Time> busy_per_device(const PlacementSpec& p,
                                  std::span<const TimedInstance> xs) {
  std::vector<Time> busy(p.num_devices(), 0);
  for (const TimedInstance& x : xs)
    for (int d : p.block(x.stage).devices) busy[d] += p.block(x.stage).time_cost;
  return busy;
}

}  // namespace

Rational Rational::Of(std::int64_t n, std::int64_t d) {
  if (d == 0) throw InvalidArgument("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  return g == 0 ? Rational{0, 1} : Rational{n / g, d / g};
}

std::string Rational::to_string() const {
  return std::to_string(num) + "/" + std::to_string(den);
}

Schedule::Schedule(std::shared_ptr<const PlacementSpec> placement,
                   int num_microbatches)
    : placement_(std::move(placement)), num_microbatches_(num_microbatches) {
  if (!placement_) throw InvalidArgument("schedule needs a placement");
  if (num_microbatches_ < 1)
    throw InvalidArgument("micro-batch count must be positive");
  starts_.assign(
      static_cast<size_t>(placement_->num_stages()) * num_microbatches_,
      kUnset);
}

bool Schedule::complete() const {
  return std::none_of(starts_.begin(), starts_.end(),
                      [](Time t) { return t < 0; });
}

Time Schedule::makespan() const {
  Time best = 0;
  for (int i = 0; i < num_stages(); ++i)
    for (int n = 0; n < num_microbatches_; ++n)
      if (start(i, n) >= 0) best = std::max(best, end(i, n));
  return best;
}

std::vector<TimedInstance> Schedule::instances() const {
  std::vector<TimedInstance> out;
  out.reserve(starts_.size());
  for (int i = 0; i < num_stages(); ++i)
    for (int n = 0; n < num_microbatches_; ++n)
      if (start(i, n) >= 0) out.push_back({i, n, start(i, n)});
  return out;
}

std::vector<Violation> validate_instances(
    const PlacementSpec& p, std::span<const TimedInstance> xs,
    std::span<const Mem> initial_memory) {
  std::vector<Violation> out;
  const int nd = p.num_devices();

  // Per-device timelines, sorted by (start, stage, mb).
  std::vector<std::vector<size_t>> on_device(nd);
  for (size_t k = 0; k < xs.size(); ++k)
    for (int d : p.block(xs[k].stage).devices) on_device[d].push_back(k);
  auto by_start = [&](size_t a, size_t b) {
    if (xs[a].start != xs[b].start) return xs[a].start < xs[b].start;
    if (xs[a].stage != xs[b].stage) return xs[a].stage < xs[b].stage;
    return xs[a].mb < xs[b].mb;
  };

  std::set<std::pair<size_t, size_t>> reported;
  for (int d = 0; d < nd; ++d) {
    auto& line = on_device[d];
    std::sort(line.begin(), line.end(), by_start);
    for (size_t a = 0; a < line.size(); ++a) {
      const TimedInstance& x = xs[line[a]];
      const Time x_end = x.start + p.block(x.stage).time_cost;
      for (size_t b = a + 1; b < line.size(); ++b) {
        const TimedInstance& y = xs[line[b]];
        if (y.start >= x_end) break;
        auto key = std::minmax(line[a], line[b]);
        if (!reported.insert(key).second) continue;
        out.push_back({ViolationKind::kExclusivity,
                       describe(p, x.stage, x.mb) + " overlaps " +
                           describe(p, y.stage, y.mb) + " on device " +
                           std::to_string(d),
                       {{x.stage, x.mb}, {y.stage, y.mb}}});
      }
    }

    Mem level = initial_memory.empty() ? 0 : initial_memory[d];
    if (level > p.mem_capacity()) {
      out.push_back({ViolationKind::kMemory,
                     "initial memory exceeds capacity on device " +
                         std::to_string(d),
                     {}});
    }
    for (size_t a = 0; a < line.size();) {
      // Blocks starting at the same instant count together.
      size_t b = a;
      while (b < line.size() && xs[line[b]].start == xs[line[a]].start) {
        level += p.block(xs[line[b]].stage).mem_delta;
        ++b;
      }
      if (level > p.mem_capacity()) {
        const TimedInstance& x = xs[line[b - 1]];
        out.push_back({ViolationKind::kMemory,
                       "memory " + std::to_string(level) + " exceeds " +
                           std::to_string(p.mem_capacity()) + " on device " +
                           std::to_string(d) + " at " +
                           describe(p, x.stage, x.mb),
                       {{x.stage, x.mb}}});
      }
      a = b;
    }
  }

  std::map<std::pair<int, int>, Time> start_of;
  for (const TimedInstance& x : xs) {
    if (!start_of.emplace(std::pair{x.stage, x.mb}, x.start).second) {
      out.push_back({ViolationKind::kStructure,
                     "duplicate instance " + describe(p, x.stage, x.mb),
                     {{x.stage, x.mb}}});
    }
  }
  for (const TimedInstance& x : xs) {
    for (int succ : p.succs(x.stage)) {
      auto it = start_of.find({succ, x.mb});
      if (it == start_of.end()) continue;
      if (x.start + p.block(x.stage).time_cost > it->second) {
        out.push_back({ViolationKind::kDependency,
                       describe(p, succ, x.mb) + " starts before " +
                           describe(p, x.stage, x.mb) + " finishes",
                       {{x.stage, x.mb}, {succ, x.mb}}});
      }
    }
  }
  return out;
}

std::vector<Violation> validate_schedule(const Schedule& s) {
  std::vector<Violation> out;
  for (int i = 0; i < s.num_stages(); ++i)
    for (int n = 0; n < s.num_microbatches(); ++n)
      if (s.start(i, n) < 0)
        out.push_back({ViolationKind::kStructure,
                       "missing start for " + describe(s.placement(), i, n),
                       {{i, n}}});
  const auto xs = s.instances();
  auto rest = validate_instances(s.placement(), xs);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

std::vector<Mem> peak_memory(const PlacementSpec& p,
                             std::span<const TimedInstance> xs,
                             std::span<const Mem> initial_memory) {
  const int nd = p.num_devices();
  std::vector<std::vector<std::pair<Time, Mem>>> events(nd);
  for (const TimedInstance& x : xs)
    for (int d : p.block(x.stage).devices)
      events[d].push_back({x.start, p.block(x.stage).mem_delta});
  std::vector<Mem> peak(nd);
  for (int d = 0; d < nd; ++d) {
    auto& ev = events[d];
    std::sort(ev.begin(), ev.end());
    Mem level = initial_memory.empty() ? 0 : initial_memory[d];
    peak[d] = level;
    for (size_t a = 0; a < ev.size();) {
      size_t b = a;
      while (b < ev.size() && ev[b].first == ev[a].first) level += ev[b++].second;
      peak[d] = std::max(peak[d], level);
      a = b;
    }
  }
  return peak;
}

ScheduleMetrics compute_metrics(const Schedule& s) {
  const PlacementSpec& p = s.placement();
  const auto xs = s.instances();
  ScheduleMetrics m;
  m.makespan = s.makespan();
  m.per_device_busy = busy_per_device(p, xs);
  m.peak_memory = peak_memory(p, xs);
  Time busy = 0;
  for (Time b : m.per_device_busy) busy += b;
  const Time cap = static_cast<Time>(p.num_devices()) * m.makespan;
  m.bubble_rate_total = cap == 0 ? Rational{} : Rational::Of(cap - busy, cap);
  if (s.repetend) m.bubble_rate_steady = steady_bubble_rate(s);
  return m;
}

Rational steady_bubble_rate(const Schedule& s) {
  if (!s.repetend)
    throw MissingAnnotation("schedule has no repetend annotation");
  const RepetendAnnotation& r = *s.repetend;
  const PlacementSpec& p = s.placement();
  if (r.period < 1) throw InvalidArgument("repetend period must be positive");
  Time busy = 0;
  if (!r.assignment.empty()) {
    // One copy holds every stage exactly once, so a steady-state period keeps
    // each device busy for its full per-micro-batch load.
    for (int d = 0; d < p.num_devices(); ++d) busy += p.device_load(d);
  } else {
    const Time lo = r.start, hi = r.start + r.period;
    for (const TimedInstance& x : s.instances()) {
      const Time a = std::max(lo, x.start);
      const Time b = std::min(hi, x.start + p.block(x.stage).time_cost);
      if (b > a) busy += (b - a) * static_cast<Time>(p.block(x.stage).devices.size());
    }
  }
  const Time cap = static_cast<Time>(p.num_devices()) * r.period;
  return Rational::Of(std::max<Time>(0, cap - busy), cap);
}

Schedule left_justify(const Schedule& s) {
  const PlacementSpec& p = s.placement();
  std::vector<TimedInstance> xs = s.instances();
  std::sort(xs.begin(), xs.end(), [](const TimedInstance& a, const TimedInstance& b) {
    return std::tie(a.start, a.stage, a.mb) < std::tie(b.start, b.stage, b.mb);
  });
  Schedule out = s;
  std::vector<Time> device_free(p.num_devices(), 0);
  for (const TimedInstance& x : xs) {
    const BlockSpec& b = p.block(x.stage);
    Time t = 0;
    for (int d : b.devices) t = std::max(t, device_free[d]);
    for (int pred : p.preds(x.stage)) t = std::max(t, out.end(pred, x.mb));
    out.set_start(x.stage, x.mb, t);
    for (int d : b.devices) device_free[d] = t + b.time_cost;
  }
  return out;
}

Schedule canonicalize_microbatch_order(const Schedule& s) {
  Schedule out(s.placement_ptr(), s.num_microbatches());
  out.repetend = s.repetend;
  std::vector<Time> starts(s.num_microbatches());
  for (int i = 0; i < s.num_stages(); ++i) {
    for (int n = 0; n < s.num_microbatches(); ++n) starts[n] = s.start(i, n);
    std::stable_sort(starts.begin(), starts.end());
    for (int n = 0; n < s.num_microbatches(); ++n) out.set_start(i, n, starts[n]);
  }
  if (out.repetend && !out.repetend->assignment.empty()) {
    // Relabeling can move the annotated copy's instances; keep the annotation
    // only if each stage's annotated instance kept its index.
    for (int i = 0; i < s.num_stages(); ++i) {
      const int n = out.repetend->assignment[i];
      if (n >= s.num_microbatches() || s.start(i, n) != out.start(i, n)) {
        out.repetend->assignment.clear();
        out.repetend->copy_starts.clear();
        break;
      }
    }
  }
  return out;
}

json schedule_to_json(const Schedule& s, const std::string& placement_path) {
  json entries = json::array();
  for (int i = 0; i < s.num_stages(); ++i)
    for (int n = 0; n < s.num_microbatches(); ++n)
      entries.push_back({{"stage", i}, {"mb", n}, {"start", s.start(i, n)}});
  json j;
  j["placement"] = placement_path.empty() ? placement_to_json(s.placement())
                                          : json(placement_path);
  j["N"] = s.num_microbatches();
  j["entries"] = std::move(entries);
  if (s.repetend) {
    const RepetendAnnotation& r = *s.repetend;
    j["repetend"] = {{"start", r.start},
                     {"end", r.end},
                     {"period", r.period},
                     {"nr", r.nr}};
    if (!r.assignment.empty()) j["repetend"]["assignment"] = r.assignment;
    if (!r.copy_starts.empty()) j["repetend"]["copy_starts"] = r.copy_starts;
  }
  return j;
}

Schedule schedule_from_json(const json& j, const std::string& base_dir) {
  try {
    std::shared_ptr<const PlacementSpec> p;
    const json& jp = j.at("placement");
    if (jp.is_string()) {
      std::string path = jp.get<std::string>();
      if (path.rfind("shape:", 0) != 0 && !std::filesystem::exists(path) &&
          !base_dir.empty())
        path = (std::filesystem::path(base_dir) / path).string();
      p = std::make_shared<const PlacementSpec>(resolve_placement(path));
    } else {
      p = std::make_shared<const PlacementSpec>(placement_from_json(jp));
    }
    const int n = j.at("N").get<int>();
    if (n < 1) throw ParseError("plan: N must be positive");
    Schedule s(p, n);
    for (const json& e : j.at("entries")) {
      const int stage = e.at("stage").get<int>();
      const int mb = e.at("mb").get<int>();
      const Time start = e.at("start").get<Time>();
      if (stage < 0 || stage >= p->num_stages() || mb < 0 || mb >= n)
        throw ParseError("plan entry out of range (stage " +
                         std::to_string(stage) + ", mb " + std::to_string(mb) +
                         ")");
      if (start < 0) throw ParseError("plan entry with negative start");
      s.set_start(stage, mb, start);
    }
    if (j.contains("repetend") && !j.at("repetend").is_null()) {
      const json& r = j.at("repetend");
      RepetendAnnotation a;
      a.start = r.at("start").get<Time>();
      a.end = r.at("end").get<Time>();
      a.period = r.at("period").get<Time>();
      a.nr = r.at("nr").get<int>();
      if (r.contains("assignment"))
        a.assignment = r.at("assignment").get<std::vector<int>>();
      if (r.contains("copy_starts"))
        a.copy_starts = r.at("copy_starts").get<std::vector<Time>>();
      if (a.period < 1) throw ParseError("plan: repetend period must be >= 1");
      if (!a.copy_starts.empty() &&
          (a.assignment.empty() ||
           static_cast<int>(a.copy_starts.size()) != p->num_stages()))
        throw ParseError("plan: copy_starts needs an assignment and one start per stage");
      if (!a.assignment.empty() &&
          static_cast<int>(a.assignment.size()) != p->num_stages())
        throw ParseError("plan: repetend assignment needs one index per stage");
      s.repetend = std::move(a);
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

Schedule load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open plan file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  return schedule_from_json(
      j, std::filesystem::path(path).parent_path().string());
}

void save_plan(const Schedule& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << schedule_to_json(s).dump(1) << "\n";
}

}  // namespace pipetile
