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

// Independent brute-force reference implementations used by the tests.
// They share no code with the library's search routines.

#ifndef PIPETILE_TESTS_ORACLES_H_
#define PIPETILE_TESTS_ORACLES_H_

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "pipetile/placement.h"
#include "pipetile/schedule.h"
#include "pipetile/solver.h"

namespace oracle {

using pipetile::DeviceMask;
using pipetile::Mem;
using pipetile::Time;

// Exhaustive unit-step timeline search. At every time step any subset of the
// startable instances may begin; per-instance state is "not started",
// "running with r units left" or "done". Edges must carry the producer's
// cost as lag. Returns -1 when no schedule exists.
class BruteForce {
 public:
  explicit BruteForce(const pipetile::SolveRequest& req) : req_(req) {
    n_ = static_cast<int>(req.instances.size());
    preds_.resize(n_);
    for (const auto& e : req.edges) preds_[e.to].push_back(e.from);
    base_mem_.assign(req.num_devices, 0);
    if (!req.initial_memory.empty()) base_mem_ = req.initial_memory;
  }

  Time min_makespan() {
    std::vector<int8_t> st(n_, kNotStarted);
    std::vector<Mem> mem = base_mem_;
    for (Mem m : mem)
      if (m > req_.mem_capacity) return -1;
    const Time r = solve(st, mem);
    return r >= kInf ? -1 : r;
  }

 private:
  static constexpr int8_t kNotStarted = -1;
  static constexpr int8_t kDone = 0;
  static constexpr Time kInf = std::numeric_limits<Time>::max() / 4;

  Time solve(std::vector<int8_t>& st, std::vector<Mem>& mem) {
    bool all_done = true;
    bool running = false;
    for (int8_t s : st) {
      all_done = all_done && s == kDone;
      running = running || s > 0;
    }
    if (all_done) return 0;
    auto it = memo_.find(st);
    if (it != memo_.end()) return it->second;

    DeviceMask busy = 0;
    for (int i = 0; i < n_; ++i)
      if (st[i] > 0) busy |= req_.instances[i].devices;
    std::vector<int> startable;
    for (int i = 0; i < n_; ++i) {
      if (st[i] != kNotStarted) continue;
      bool ready = true;
      for (int p : preds_[i]) ready = ready && st[p] == kDone;
      if (ready && !(req_.instances[i].devices & busy)) startable.push_back(i);
    }

    Time best = kInf;
    const int k = static_cast<int>(startable.size());
    for (std::uint32_t subset = 0; subset < (1u << k); ++subset) {
      if (subset == 0 && !running) continue;
      DeviceMask used = 0;
      bool ok = true;
      std::vector<Mem> next_mem = mem;
      for (int b = 0; b < k && ok; ++b) {
        if (!(subset >> b & 1)) continue;
        const auto& x = req_.instances[startable[b]];
        if (x.devices & used) ok = false;
        used |= x.devices;
        for (int d = 0; d < req_.num_devices; ++d)
          if (x.devices >> d & 1) next_mem[d] += x.mem;
      }
      if (!ok) continue;
      for (int d = 0; d < req_.num_devices; ++d)
        if (next_mem[d] > req_.mem_capacity) ok = false;
      if (!ok) continue;
      std::vector<int8_t> next = st;
      for (int b = 0; b < k; ++b)
        if (subset >> b & 1)
          next[startable[b]] = static_cast<int8_t>(req_.instances[startable[b]].time);
      for (int i = 0; i < n_; ++i)
        if (next[i] > 0) --next[i];
      const Time r = solve(next, next_mem);
      if (r < kInf) best = std::min(best, r + 1);
    }
    memo_[st] = best;
    return best;
  }

  const pipetile::SolveRequest& req_;
  int n_;
  std::vector<std::vector<int>> preds_;
  std::vector<Mem> base_mem_;
  std::map<std::vector<int8_t>, Time> memo_;
};

inline Time brute_force_makespan(const pipetile::SolveRequest& req) {
  return BruteForce(req).min_makespan();
}

// Random DAG placement with K stages on D devices. Costs in [1, max_cost],
// mostly single-device blocks with the occasional multi-device block.
inline pipetile::PlacementSpec random_placement(std::mt19937& rng, int K, int D,
                                                Time max_cost = 3) {
  std::vector<pipetile::BlockSpec> blocks;
  std::uniform_int_distribution<int> dev(0, D - 1);
  std::uniform_int_distribution<Time> cost(1, max_cost);
  std::uniform_int_distribution<int> coin(0, 99);
  for (int i = 0; i < K; ++i) {
    pipetile::BlockSpec b;
    b.stage_id = i;
    b.label = "s" + std::to_string(i);
    b.kind = i < K / 2 ? pipetile::BlockKind::kForward
                       : pipetile::BlockKind::kBackward;
    b.devices = {dev(rng)};
    if (coin(rng) < 15) {
      const int other = dev(rng);
      if (other != b.devices[0]) b.devices.push_back(other);
      std::sort(b.devices.begin(), b.devices.end());
    }
    b.time_cost = cost(rng);
    b.mem_delta = i < K / 2 ? 1 : -1;
    blocks.push_back(b);
  }
  std::vector<pipetile::Dep> deps;
  for (int j = 1; j < K; ++j)
    for (int i = 0; i < j; ++i)
      if (coin(rng) < (i == j - 1 ? 70 : 20)) deps.push_back({i, j});
  return pipetile::PlacementSpec::Create(D, pipetile::kUnboundedMemory,
                                         std::move(blocks), std::move(deps));
}

inline std::vector<pipetile::BlockInstance> all_instances(
    const pipetile::PlacementSpec& p, int N) {
  std::vector<pipetile::BlockInstance> xs;
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < p.num_stages(); ++s) xs.push_back({s, n});
  return xs;
}


// Smallest period P for which some internal schedule of the assignment tiles
// validly, found by enumerating start times in [0, sum of costs] with each
// device's blocks of one copy inside a window of length P. The final check
// materializes `copies` consecutive copies and runs the schedule validator.
// Returns -1 if no period up to `max_period` works.
inline Time brute_force_period(const pipetile::PlacementSpec& p,
                               const std::vector<int>& a, Time max_period) {
  const int k = p.num_stages();
  const Time horizon = p.total_cost();
  std::vector<pipetile::Mem> entry(p.num_devices(), 0);
  for (int i = 0; i < k; ++i)
    for (int d : p.block(i).devices) entry[d] += a[i] * p.block(i).mem_delta;
  const int copies = *std::max_element(a.begin(), a.end()) + 3;
  for (Time period = 1; period <= max_period; ++period) {
    std::vector<Time> s(k, 0);
    bool found = false;
    std::function<void(int)> rec = [&](int i) {
      if (found) return;
      if (i == k) {
        std::vector<pipetile::TimedInstance> xs;
        for (int c = 0; c < copies; ++c)
          for (int j = 0; j < k; ++j) xs.push_back({j, a[j] + c, s[j] + c * period});
        if (pipetile::validate_instances(p, xs, entry).empty()) found = true;
        return;
      }
      for (Time t = 0; t + p.block(i).time_cost <= horizon && !found; ++t) {
        s[i] = t;
        bool ok = true;
        for (int j = 0; j < i && ok; ++j) {
          if (!(p.device_mask(i) & p.device_mask(j))) continue;
          const Time lo = std::min(s[i], s[j]);
          const Time hi = std::max(s[i] + p.block(i).time_cost,
                                   s[j] + p.block(j).time_cost);
          if (hi - lo > period) ok = false;
          if (s[i] < s[j] + p.block(j).time_cost &&
              s[j] < s[i] + p.block(i).time_cost)
            ok = false;
        }
        for (const auto& e : p.deps()) {
          if (!ok) break;
          if (std::max(e.from, e.to) != i) continue;
          if (s[e.to] < s[e.from] + p.block(e.from).time_cost -
                            (a[e.from] - a[e.to]) * period)
            ok = false;
        }
        if (ok) rec(i + 1);
      }
    };
    rec(0);
    if (found) return period;
  }
  return -1;
}

// Validity by materializing every time unit: per device, at most one running
// block per unit and the memory sum of blocks started before each unit
// within capacity; every dependency ends before its consumer starts.
inline bool timeline_valid(const pipetile::PlacementSpec& p,
                           const std::vector<pipetile::TimedInstance>& xs) {
  Time horizon = 0;
  for (const auto& x : xs)
    horizon = std::max(horizon, x.start + p.block(x.stage).time_cost);
  for (int d = 0; d < p.num_devices(); ++d) {
    std::vector<int> busy(horizon + 1, 0);
    std::vector<Mem> mem(horizon + 2, 0);
    for (const auto& x : xs) {
      const auto& b = p.block(x.stage);
      if (!std::count(b.devices.begin(), b.devices.end(), d)) continue;
      for (Time t = x.start; t < x.start + b.time_cost; ++t) busy[t]++;
      for (Time tau = x.start + 1; tau <= horizon + 1; ++tau)
        mem[tau] += b.mem_delta;
    }
    for (int u : busy)
      if (u > 1) return false;
    for (Mem m : mem)
      if (m > p.mem_capacity()) return false;
  }
  std::map<std::pair<int, int>, Time> start;
  for (const auto& x : xs) start[{x.stage, x.mb}] = x.start;
  for (const auto& x : xs)
    for (int pred : p.preds(x.stage)) {
      auto it = start.find({pred, x.mb});
      if (it != start.end() &&
          it->second + p.block(pred).time_cost > x.start)
        return false;
    }
  return true;
}

// A valid schedule built by appending instances in a random topological
// order, each at the earliest time after its producers and after the last
// block on its devices. Ignores memory.
inline pipetile::Schedule random_valid_schedule(
    std::shared_ptr<const pipetile::PlacementSpec> p, int N,
    std::mt19937& rng) {
  pipetile::Schedule s(p, N);
  std::vector<Time> dev_free(p->num_devices(), 0);
  std::vector<int> next(N, 0);  // position in topo order per micro-batch
  const auto& topo = p->topo_order();
  int remaining = N * p->num_stages();
  while (remaining > 0) {
    std::vector<int> ready;
    for (int n = 0; n < N; ++n)
      if (next[n] < p->num_stages()) ready.push_back(n);
    const int n = ready[std::uniform_int_distribution<size_t>(
        0, ready.size() - 1)(rng)];
    const int stage = topo[next[n]++];
    Time t = 0;
    for (int pred : p->preds(stage))
      t = std::max(t, s.end(pred, n));
    for (int d : p->block(stage).devices) t = std::max(t, dev_free[d]);
    s.set_start(stage, n, t);
    for (int d : p->block(stage).devices)
      dev_free[d] = t + p->block(stage).time_cost;
    --remaining;
  }
  return s;
}

}  // namespace oracle

#endif  // PIPETILE_TESTS_ORACLES_H_
