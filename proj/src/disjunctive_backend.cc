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

// Pair-orientation search over a difference-logic core.
//
// Every two instances that share a device must run one after the other.
// The search branches on the order of such pairs. Each decision adds a
// "first one finishes before the second starts" edge to a difference
// constraint graph with incrementally maintained all-pairs longest paths.
// After each decision, pairs with only one consistent order are fixed
// until nothing changes. Device memory is checked on the partial device
// orders. With all pairs fixed, earliest start times are the longest paths
// from the origin.

#include <algorithm>
#include <bit>
#include <limits>

#include "backends.h"

namespace pipetile::internal {
namespace {

constexpr Time kNone = std::numeric_limits<Time>::min() / 4;

class DisjunctiveSearch {
 public:
  DisjunctiveSearch(const SolveRequest& req, Time horizon,
                    const Deadline& deadline)
      : req_(req),
        horizon_(horizon),
        deadline_(deadline),
        n_(static_cast<int>(req.instances.size())),
        nd_(req.num_devices),
        w_(n_ + 1) {
    for (int a = 0; a < n_; ++a)
      for (int b = a + 1; b < n_; ++b)
        if (req.instances[a].devices & req.instances[b].devices)
          pairs_.push_back({a, b});
    on_device_.resize(nd_);
    for (int i = 0; i < n_; ++i)
      for (DeviceMask m = req.instances[i].devices; m; m &= m - 1)
        on_device_[std::countr_zero(m)].push_back(i);
    entry_.assign(nd_, 0);
    if (!req.initial_memory.empty()) entry_ = req.initial_memory;
  }

  SolveResult run() {
    SolveResult r;
    std::vector<char> fixed(pairs_.size(), 0);
    if (!init() || !propagate(fixed)) {
      r.status = SolveStatus::kInfeasible;
      r.stats = stats_;
      return r;
    }
    const bool found = dfs(fixed);
    r.stats = stats_;
    if (found) {
      r.status = SolveStatus::kSatisfiable;
      r.starts = solution_;
    } else {
      r.status = timed_out_ ? SolveStatus::kTimeout : SolveStatus::kInfeasible;
      r.node_limited = node_limited_;
    }
    return r;
  }

 private:
  struct Pair {
    int a, b;
  };
  struct Job {
    Time release, deadline, time;
  };

  Time& at(int u, int v) { return dist_[static_cast<size_t>(u) * w_ + v]; }
  Time time(int i) const { return req_.instances[i].time; }

  bool init() {
    for (int d = 0; d < nd_; ++d)
      if (entry_[d] > req_.mem_capacity) return false;
    dist_.assign(static_cast<size_t>(w_) * w_, kNone);
    for (int u = 0; u < w_; ++u) at(u, u) = 0;
    auto raw = [&](int u, int v, Time w) { at(u, v) = std::max(at(u, v), w); };
    for (int i = 0; i < n_; ++i) {
      raw(0, i + 1, 0);
      raw(i + 1, 0, time(i) - horizon_);
    }
    for (const SolveEdge& e : all_edges(req_)) raw(e.from + 1, e.to + 1, e.lag);
    for (int i = 0; i < n_; ++i) {
      if (!req_.pinned(i)) continue;
      raw(0, i + 1, req_.fixed_start[i]);
      raw(i + 1, 0, -req_.fixed_start[i]);
    }
    if (req_.device_span) {
      for (const Pair& p : pairs_) {
        raw(p.b + 1, p.a + 1, time(p.b) - *req_.device_span);
        raw(p.a + 1, p.b + 1, time(p.a) - *req_.device_span);
      }
    }
    for (int k = 0; k < w_; ++k)
      for (int u = 0; u < w_; ++u) {
        if (at(u, k) == kNone) continue;
        for (int v = 0; v < w_; ++v) {
          if (at(k, v) == kNone) continue;
          at(u, v) = std::max(at(u, v), at(u, k) + at(k, v));
        }
      }
    for (int u = 0; u < w_; ++u)
      if (at(u, u) > 0) return false;
    for (int d = 0; d < nd_; ++d) {
      Time load = 0;
      for (int i : on_device_[d]) load += time(i);
      if (load > horizon_) return false;
      if (req_.device_span && load > *req_.device_span) return false;
    }
    return true;
  }

  bool add_edge(int u, int v, Time w) {
    if (at(u, v) >= w) return true;
    if (at(v, u) != kNone && at(v, u) + w > 0) return false;
    for (int x = 0; x < w_; ++x) {
      const Time xu = at(x, u);
      if (xu == kNone) continue;
      for (int y = 0; y < w_; ++y) {
        const Time vy = at(v, y);
        if (vy == kNone) continue;
        Time& xy = at(x, y);
        xy = std::max(xy, xu + w + vy);
      }
    }
    return true;
  }

  // a before b is still possible.
  bool can_precede(int a, int b) {
    const Time ba = at(b + 1, a + 1);
    return ba == kNone || ba + time(a) <= 0;
  }

  // Slack left by putting a before b; larger is looser.
  Time slack(int a, int b) {
    const Time ba = at(b + 1, a + 1);
    return ba == kNone ? horizon_ : -(ba + time(a));
  }

  bool propagate(std::vector<char>& fixed) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t k = 0; k < pairs_.size(); ++k) {
        if (fixed[k]) continue;
        const auto [a, b] = pairs_[k];
        const bool ab = can_precede(a, b);
        const bool ba = can_precede(b, a);
        if (!ab && !ba) return false;
        if (ab && ba) continue;
        fixed[k] = 1;
        const int first = ab ? a : b;
        const int second = ab ? b : a;
        if (!add_edge(first + 1, second + 1, time(first))) return false;
        changed = true;
      }
    }
    return memory_ok() && load_ok();
  }

  // Lower bound on each device's level when a growing block starts: the
  // entry level, every block already ordered before it, and every
  // undecided block that could free memory before it.
  bool memory_ok() {
    if (req_.mem_capacity == kUnboundedMemory) return true;
    for (int d = 0; d < nd_; ++d) {
      for (int x : on_device_[d]) {
        if (req_.instances[x].mem <= 0) continue;
        Mem level = entry_[d] + req_.instances[x].mem;
        for (int y : on_device_[d]) {
          if (y == x) continue;
          const Mem m = req_.instances[y].mem;
          if (!can_precede(x, y)) level += m;
          else if (can_precede(y, x) && m < 0) level += m;
        }
        if (level > req_.mem_capacity) return false;
      }
    }
    return true;
  }

  // One-device preemptive relaxation: every block on the device runs
  // within [earliest start, latest end] and may be split. Earliest
  // deadline first decides that relaxation exactly.
  bool load_ok() {
    for (int d = 0; d < nd_; ++d) {
      auto& jobs = scratch_;
      jobs.clear();
      for (int i : on_device_[d]) {
        const Time release = at(0, i + 1);
        const Time deadline = -at(i + 1, 0) + time(i);
        jobs.push_back({release, deadline, time(i)});
      }
      std::sort(jobs.begin(), jobs.end(), [](const Job& x, const Job& y) {
        return x.release < y.release;
      });
      auto later = [](const Job& x, const Job& y) {
        return x.deadline > y.deadline;
      };
      auto& heap = heap_;
      heap.clear();
      size_t next = 0;
      Time now = 0;
      while (next < jobs.size() || !heap.empty()) {
        if (heap.empty()) now = std::max(now, jobs[next].release);
        while (next < jobs.size() && jobs[next].release <= now) {
          heap.push_back(jobs[next++]);
          std::push_heap(heap.begin(), heap.end(), later);
        }
        std::pop_heap(heap.begin(), heap.end(), later);
        Job& top = heap.back();
        const Time until = next < jobs.size()
                               ? jobs[next].release
                               : std::numeric_limits<Time>::max();
        const Time run = std::min(top.time, until - now);
        now += run;
        top.time -= run;
        if (top.time == 0) {
          if (now > top.deadline) return false;
          heap.pop_back();
        } else {
          std::push_heap(heap.begin(), heap.end(), later);
        }
      }
    }
    return true;
  }

  bool dfs(std::vector<char>& fixed) {
    if ((stats_.nodes++ & 255) == 0 && deadline_.expired()) timed_out_ = true;
    if (req_.node_limit > 0 && stats_.nodes > req_.node_limit) {
      timed_out_ = true;
      node_limited_ = true;
    }
    if (timed_out_) return false;

    // Smallest slack among open pairs; that pair is decided next, looser
    // order first.
    int pick = -1;
    Time best = std::numeric_limits<Time>::max();
    for (size_t k = 0; k < pairs_.size(); ++k) {
      if (fixed[k]) continue;
      const auto [a, b] = pairs_[k];
      const Time s = std::min(slack(a, b), slack(b, a));
      if (s < best) {
        best = s;
        pick = static_cast<int>(k);
      }
    }
    if (pick < 0) {
      solution_.resize(n_);
      for (int i = 0; i < n_; ++i) solution_[i] = at(0, i + 1);
      return true;
    }

    const auto [a, b] = pairs_[pick];
    const bool a_first = slack(a, b) >= slack(b, a);
    const int order[2][2] = {{a_first ? a : b, a_first ? b : a},
                             {a_first ? b : a, a_first ? a : b}};
    const std::vector<Time> saved = dist_;
    for (const auto& o : order) {
      std::vector<char> next = fixed;
      next[pick] = 1;
      if (add_edge(o[0] + 1, o[1] + 1, time(o[0])) && propagate(next) &&
          dfs(next))
        return true;
      dist_ = saved;
      if (timed_out_) return false;
    }
    ++stats_.failures;
    return false;
  }

  const SolveRequest& req_;
  const Time horizon_;
  const Deadline& deadline_;
  const int n_;
  const int nd_;
  const int w_;

  std::vector<Pair> pairs_;
  std::vector<std::vector<int>> on_device_;
  std::vector<Mem> entry_;
  std::vector<Time> dist_;
  std::vector<Job> scratch_, heap_;
  std::vector<Time> solution_;
  SolverStats stats_;
  bool timed_out_ = false;
  bool node_limited_ = false;
};

class DisjunctiveBackend final : public SolverBackend {
 public:
  std::string_view name() const override { return "disjunctive"; }
  bool supports(const SolveRequest&) const override { return true; }
  SolveResult decide(const SolveRequest& req, Time horizon,
                     const Deadline& deadline) const override {
    return DisjunctiveSearch(req, horizon, deadline).run();
  }
};

}  // namespace

std::unique_ptr<SolverBackend> make_disjunctive_backend() {
  return std::make_unique<DisjunctiveBackend>();
}

}  // namespace pipetile::internal
