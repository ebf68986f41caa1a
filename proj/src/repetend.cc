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

#include "pipetile/repetend.h"

#include <algorithm>
#include <bit>
#include <chrono>

#include "pipetile/errors.h"

namespace pipetile {

bool is_canonical_assignment(const PlacementSpec& p, const Assignment& a) {
  if (static_cast<int>(a.size()) != p.num_stages() || a.empty()) return false;
  if (*std::min_element(a.begin(), a.end()) != 0) return false;
  for (const Dep& e : p.deps())
    if (a[e.from] < a[e.to]) return false;
  return true;
}

void iter_repetend_assignments(
    const PlacementSpec& p, int nr,
    const std::function<bool(const Assignment&)>& visit, bool only_new) {
  if (nr < 1) throw InvalidArgument("repetend micro-batch count must be >= 1");
  const int k = p.num_stages();
  // Bounds from edges whose other endpoint has a smaller stage id.
  std::vector<std::vector<int>> at_least(k), at_most(k);
  for (const Dep& e : p.deps()) {
    if (e.to < e.from) at_least[e.from].push_back(e.to);
    else at_most[e.to].push_back(e.from);
  }
  Assignment a(k, 0);
  bool stop = false;
  std::function<void(int)> rec = [&](int i) {
    if (stop) return;
    if (i == k) {
      const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
      if (*lo != 0) return;
      if (only_new && *hi != nr - 1) return;
      if (!visit(a)) stop = true;
      return;
    }
    int lo = 0, hi = nr - 1;
    for (int j : at_least[i]) lo = std::max(lo, a[j]);
    for (int j : at_most[i]) hi = std::min(hi, a[j]);
    for (int v = lo; v <= hi && !stop; ++v) {
      a[i] = v;
      rec(i + 1);
    }
  };
  rec(0);
}

std::vector<Assignment> repetend_assignments(const PlacementSpec& p, int nr) {
  std::vector<Assignment> out;
  iter_repetend_assignments(p, nr, [&](const Assignment& a) {
    out.push_back(a);
    return true;
  });
  return out;
}

std::vector<Mem> entry_memory(const PlacementSpec& p, const Assignment& a) {
  std::vector<Mem> mem(p.num_devices(), 0);
  for (int i = 0; i < p.num_stages(); ++i)
    for (int d : p.block(i).devices) mem[d] += a[i] * p.block(i).mem_delta;
  return mem;
}

std::vector<TimedInstance> tile_repetend(const Assignment& a,
                                         std::span<const Time> starts,
                                         Time period, int copies, Time offset) {
  std::vector<TimedInstance> out;
  out.reserve(a.size() * static_cast<size_t>(copies));
  for (int c = 0; c < copies; ++c)
    for (size_t i = 0; i < a.size(); ++i)
      out.push_back({static_cast<int>(i), a[i] + c,
                     offset + starts[i] + c * period});
  return out;
}

int tiling_witness_copies(const PlacementSpec& p, const Assignment& a) {
  (void)p;
  return *std::max_element(a.begin(), a.end()) + 2;
}

namespace {

Time copy_makespan(const PlacementSpec& p, std::span<const Time> starts) {
  Time lo = starts[0], hi = 0;
  for (int i = 0; i < p.num_stages(); ++i) {
    lo = std::min(lo, starts[i]);
    hi = std::max(hi, starts[i] + p.block(i).time_cost);
  }
  return hi - lo;
}

}  // namespace

Compaction compact_period(const PlacementSpec& p, std::span<const Time> starts,
                          const Assignment& a) {
  if (static_cast<int>(starts.size()) != p.num_stages() ||
      static_cast<int>(a.size()) != p.num_stages())
    throw InvalidArgument("compact_period: size mismatch");
  const std::vector<Mem> entry = entry_memory(p, a);
  Compaction out;
  out.exec.assign(p.num_devices(), 0);
  out.wait.assign(p.num_devices(), 0);
  Time first = std::max<Time>(1, p.period_lower_bound());
  for (int d = 0; d < p.num_devices(); ++d) {
    Time lo = -1, hi = -1;
    for (int i = 0; i < p.num_stages(); ++i) {
      if (!(p.device_mask(i) >> d & 1)) continue;
      lo = lo < 0 ? starts[i] : std::min(lo, starts[i]);
      hi = std::max(hi, starts[i] + p.block(i).time_cost);
    }
    out.exec[d] = lo < 0 ? 0 : hi - lo;
    first = std::max(first, out.exec[d]);
  }
  // A copy never shares a device with the next one, so every device's
  // blocks of one copy end before the same device's blocks of the next
  // copy begin. At the copy makespan consecutive copies are disjoint in
  // time, which bounds the scan.
  const Time makespan = std::max(first, copy_makespan(p, starts));
  const int copies = tiling_witness_copies(p, a);
  for (Time period = first; period <= makespan; ++period) {
    const auto tiled = tile_repetend(a, starts, period, copies);
    if (validate_instances(p, tiled, entry).empty()) {
      out.period = period;
      break;
    }
  }
  if (out.period == 0)
    throw InvalidArgument("compact_period: repetend is not valid in isolation");
  for (int d = 0; d < p.num_devices(); ++d)
    out.wait[d] = out.period - out.exec[d];
  return out;
}

RepetendResult solve_repetend(const PlacementSpec& p, const Assignment& a,
                              const RepetendOptions& opts) {
  RepetendResult r;
  if (!is_canonical_assignment(p, a))
    throw InvalidArgument("solve_repetend: assignment is not canonical");
  for (int d = 0; d < p.num_devices(); ++d) {
    if (p.net_mem_delta(d) > 0) {
      r.diagnostic = "device " + std::to_string(d) +
                     " gains memory every micro-batch; no steady state exists";
      return r;
    }
  }
  const std::vector<Mem> entry = entry_memory(p, a);
  for (int d = 0; d < p.num_devices(); ++d) {
    if (entry[d] > p.mem_capacity()) {
      r.diagnostic = "entry memory exceeds capacity on device " +
                     std::to_string(d);
      return r;
    }
  }

  SolveRequest req;
  req.num_devices = p.num_devices();
  req.mem_capacity = p.mem_capacity();
  req.initial_memory = entry;
  req.mode = SolveMode::kDecide;
  for (int i = 0; i < p.num_stages(); ++i) {
    const BlockSpec& b = p.block(i);
    req.instances.push_back({i, a[i], b.time_cost, p.device_mask(i), b.mem_delta});
  }
  req.horizon = p.total_cost();

  const auto backend = make_backend(BackendKind::kDisjunctive);
  const auto t0 = std::chrono::steady_clock::now();
  const Time first = std::max<Time>(1, p.period_lower_bound());
  const Time last = opts.period_below > 0
                        ? std::min(opts.period_below - 1, p.total_cost())
                        : p.total_cost();
  for (Time period = first; period <= last; ++period) {
    const double used =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    req.budget_seconds = std::max(0.0, opts.budget_seconds - used);
    req.device_span = period;
    req.edges.clear();
    for (const Dep& e : p.deps())
      req.edges.push_back({e.from, e.to,
                           p.block(e.from).time_cost -
                               (a[e.from] - a[e.to]) * period});
    SolveResult s = solve_decide(req, *backend);
    r.stats += s.stats;
    if (s.status == SolveStatus::kTimeout) {
      r.status = RepetendStatus::kTimeout;
      r.diagnostic = "budget exhausted at period " + std::to_string(period);
      return r;
    }
    if (s.status != SolveStatus::kSatisfiable) continue;

    Repetend rep;
    rep.assignment = a;
    rep.nr = *std::max_element(a.begin(), a.end()) + 1;
    rep.starts = s.starts;
    rep.entry_memory = entry;
    Compaction c = compact_period(p, rep.starts, a);
    rep.period = c.period;
    rep.exec = std::move(c.exec);
    rep.wait = std::move(c.wait);
    r.status = RepetendStatus::kFound;
    r.repetend = std::move(rep);
    return r;
  }
  r.status = opts.period_below > 0 && last < p.total_cost()
                 ? RepetendStatus::kNoBetter
                 : RepetendStatus::kInfeasible;
  if (r.status == RepetendStatus::kInfeasible)
    r.diagnostic = "no period satisfies the memory capacity";
  return r;
}

}  // namespace pipetile
