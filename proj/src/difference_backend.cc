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

// Ordering search over a difference-logic core.
//
// Decisions append instances to the end of every device sequence they
// occupy. Each append adds "previous block finishes first" edges to a
// difference constraint graph whose all-pairs longest paths are maintained
// incrementally; a positive cycle means the partial ordering is infeasible.
// Earliest feasible start times are the longest paths from the origin.
//
// Two consecutive appends on disjoint devices commute, so only the
// increasing-index order is explored for them.

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>

#include "backends.h"
#include "pipetile/errors.h"

namespace pipetile::internal {
namespace {

constexpr Time kNone = std::numeric_limits<Time>::min() / 4;

class DifferenceSearch {
 public:
  DifferenceSearch(const SolveRequest& req, Time horizon,
                   const Deadline& deadline)
      : req_(req),
        horizon_(horizon),
        deadline_(deadline),
        n_(static_cast<int>(req.instances.size())),
        nd_(req.num_devices),
        w_(n_ + 1) {
    after_.assign(n_, -1);
    if (!req.order_after.empty()) after_ = req.order_after;
    appended_.assign(n_, 0);
    seq_first_.assign(nd_, -1);
    seq_last_.assign(nd_, -1);
    level_.assign(nd_, 0);
    if (!req.initial_memory.empty()) level_ = req.initial_memory;
    rest_load_.assign(nd_, 0);
    rest_count_.assign(nd_, 0);
    for (const SolveInstance& x : req.instances) {
      for (DeviceMask m = x.devices; m; m &= m - 1) {
        const int d = std::countr_zero(m);
        rest_load_[d] += x.time;
        ++rest_count_[d];
      }
    }
  }

  SolveResult run() {
    SolveResult r;
    if (!init()) {
      r.status = SolveStatus::kInfeasible;
      r.stats = stats_;
      return r;
    }
    const bool found = dfs(-1);
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
  // Node 0 is the time origin; instance i is node i + 1.
  Time& at(int a, int b) { return dist_[static_cast<size_t>(a) * w_ + b]; }

  bool init() {
    for (int d = 0; d < nd_; ++d)
      if (level_[d] > req_.mem_capacity) return false;
    dist_.assign(static_cast<size_t>(w_) * w_, kNone);
    for (int a = 0; a < w_; ++a) at(a, a) = 0;
    auto raw = [&](int u, int v, Time w) { at(u, v) = std::max(at(u, v), w); };
    for (int i = 0; i < n_; ++i) {
      raw(0, i + 1, 0);
      raw(i + 1, 0, req_.instances[i].time - horizon_);
    }
    for (const SolveEdge& e : all_edges(req_)) raw(e.from + 1, e.to + 1, e.lag);
    for (int i = 0; i < n_; ++i) {
      if (!req_.pinned(i)) continue;
      raw(0, i + 1, req_.fixed_start[i]);
      raw(i + 1, 0, -req_.fixed_start[i]);
    }
    if (req_.device_span) {
      // Two blocks sharing a device lie in one window of length P, so
      // each starts no earlier than the other's end minus P.
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b)
          if (a != b && (req_.instances[a].devices & req_.instances[b].devices))
            raw(b + 1, a + 1, req_.instances[b].time - *req_.device_span);
    }
    // Max-plus closure.
    for (int k = 0; k < w_; ++k)
      for (int a = 0; a < w_; ++a) {
        if (at(a, k) == kNone) continue;
        for (int b = 0; b < w_; ++b) {
          if (at(k, b) == kNone) continue;
          at(a, b) = std::max(at(a, b), at(a, k) + at(k, b));
        }
      }
    for (int a = 0; a < w_; ++a)
      if (at(a, a) > 0) return false;
    return devices_ok();
  }

  bool add_edge(int u, int v, Time w) {
    if (at(u, v) >= w) return true;
    if (at(v, u) != kNone && at(v, u) + w > 0) return false;
    for (int a = 0; a < w_; ++a) {
      const Time au = at(a, u);
      if (au == kNone) continue;
      for (int b = 0; b < w_; ++b) {
        const Time vb = at(v, b);
        if (vb == kNone) continue;
        Time& ab = at(a, b);
        ab = std::max(ab, au + w + vb);
      }
    }
    return true;
  }

  bool devices_ok() {
    for (int d = 0; d < nd_; ++d) {
      if (rest_count_[d] == 0) continue;
      const int last = seq_last_[d];
      if (last >= 0) {
        const Time end = at(0, last + 1) + req_.instances[last].time;
        if (end + rest_load_[d] > horizon_) return false;
        if (req_.device_span) {
          const int first = seq_first_[d];
          const Time span = at(first + 1, last + 1) + req_.instances[last].time;
          if (span + rest_load_[d] > *req_.device_span) return false;
        }
      } else {
        Time earliest = std::numeric_limits<Time>::max();
        for (int i = 0; i < n_; ++i)
          if (!appended_[i] && (req_.instances[i].devices >> d & 1))
            earliest = std::min(earliest, at(0, i + 1));
        if (earliest + rest_load_[d] > horizon_) return false;
        if (req_.device_span && rest_load_[d] > *req_.device_span) return false;
      }
    }
    return true;
  }

  bool dfs(int prev) {
    if ((stats_.nodes++ & 255) == 0 && deadline_.expired()) timed_out_ = true;
    if (req_.node_limit > 0 && stats_.nodes > req_.node_limit) {
      timed_out_ = true;
      node_limited_ = true;
    }
    if (timed_out_) return false;
    if (placed_ == n_) {
      solution_.resize(n_);
      for (int i = 0; i < n_; ++i) solution_[i] = at(0, i + 1);
      return true;
    }

    std::vector<int> cands;
    for (int x = 0; x < n_; ++x) {
      if (appended_[x]) continue;
      if (after_[x] >= 0 && !appended_[after_[x]]) continue;
      const SolveInstance& sx = req_.instances[x];
      if (prev >= 0 && x < prev &&
          (req_.instances[prev].devices & sx.devices) == 0)
        continue;
      bool mem_ok = true;
      for (DeviceMask m = sx.devices; m; m &= m - 1) {
        const int d = std::countr_zero(m);
        if (level_[d] + sx.mem > req_.mem_capacity) mem_ok = false;
      }
      if (mem_ok) cands.push_back(x);
    }
    std::stable_sort(cands.begin(), cands.end(), [&](int a, int b) {
      return at(0, a + 1) < at(0, b + 1);
    });

    for (int x : cands) {
      const std::vector<Time> saved = dist_;
      const auto saved_first = seq_first_;
      const auto saved_last = seq_last_;
      if (append(x) && devices_ok() && dfs(x)) return true;
      dist_ = saved;
      seq_first_ = saved_first;
      seq_last_ = saved_last;
      unappend(x);
      if (timed_out_) return false;
    }
    ++stats_.failures;
    return false;
  }

  // Bookkeeping is always applied so that unappend() can undo it; the
  // return value reports whether the edges stayed consistent.
  bool append(int x) {
    const SolveInstance& sx = req_.instances[x];
    appended_[x] = 1;
    ++placed_;
    bool ok = true;
    for (DeviceMask m = sx.devices; m; m &= m - 1) {
      const int d = std::countr_zero(m);
      level_[d] += sx.mem;
      rest_load_[d] -= sx.time;
      --rest_count_[d];
      const int last = seq_last_[d];
      if (last >= 0) {
        ok = ok && add_edge(last + 1, x + 1, req_.instances[last].time);
      } else {
        seq_first_[d] = x;
      }
      seq_last_[d] = x;
      if (ok && rest_count_[d] == 0 && req_.device_span)
        ok = add_edge(x + 1, seq_first_[d] + 1, sx.time - *req_.device_span);
    }
    return ok;
  }

  void unappend(int x) {
    const SolveInstance& sx = req_.instances[x];
    appended_[x] = 0;
    --placed_;
    for (DeviceMask m = sx.devices; m; m &= m - 1) {
      const int d = std::countr_zero(m);
      level_[d] -= sx.mem;
      rest_load_[d] += sx.time;
      ++rest_count_[d];
    }
  }

  const SolveRequest& req_;
  const Time horizon_;
  const Deadline& deadline_;
  const int n_;
  const int nd_;
  const int w_;

  std::vector<Time> dist_;
  std::vector<int> after_;
  std::vector<char> appended_;
  int placed_ = 0;
  std::vector<int> seq_first_, seq_last_;
  std::vector<Mem> level_;
  std::vector<Time> rest_load_;
  std::vector<int> rest_count_;
  std::vector<Time> solution_;
  SolverStats stats_;
  bool timed_out_ = false;
  bool node_limited_ = false;
};

class DifferenceBackend final : public SolverBackend {
 public:
  std::string_view name() const override { return "difference"; }
  bool supports(const SolveRequest&) const override { return true; }
  SolveResult decide(const SolveRequest& req, Time horizon,
                     const Deadline& deadline) const override {
    return DifferenceSearch(req, horizon, deadline).run();
  }
};

}  // namespace

std::unique_ptr<SolverBackend> make_difference_backend() {
  return std::make_unique<DifferenceBackend>();
}

}  // namespace pipetile::internal
