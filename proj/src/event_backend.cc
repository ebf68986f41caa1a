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

// Event-driven branch and bound.
//
// The search walks time forward over block completion events. At each event
// it picks the most critical startable instance and branches on starting it
// now or deferring it. A deferred instance may only start after some other
// block has started on one of its devices: otherwise it could have started
// at the deferral point with the same per-device order, which is never worse.
// Memory only depends on per-device order, so the explored schedules include
// an optimal one.

#include <algorithm>
#include <bit>
#include <limits>
#include <string>
#include <unordered_map>

#include "backends.h"
#include "pipetile/errors.h"

namespace pipetile::internal {
namespace {

constexpr size_t kMaxMemoEntries = 1 << 20;

class EventSearch {
 public:
  EventSearch(const SolveRequest& req, Time horizon, const Deadline& deadline)
      : req_(req),
        horizon_(horizon),
        deadline_(deadline),
        n_(static_cast<int>(req.instances.size())),
        nd_(req.num_devices) {
    const auto edges = all_edges(req);
    preds_.assign(n_, {});
    succs_.assign(n_, {});
    for (const SolveEdge& e : edges) {
      preds_[e.to].push_back({e.from, e.lag});
      succs_[e.from].push_back({e.to, e.lag});
    }
    topo_ = topo_order(n_, edges);
    tail_.assign(n_, 0);
    for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
      const int u = *it;
      Time t = req.instances[u].time;
      for (auto [v, lag] : succs_[u]) t = std::max(t, lag + tail_[v]);
      tail_[u] = t;
    }
    priority_.resize(n_);
    for (int i = 0; i < n_; ++i) priority_[i] = i;
    std::stable_sort(priority_.begin(), priority_.end(),
                     [&](int a, int b) { return tail_[a] > tail_[b]; });
    start_.assign(n_, -1);
    deferred_.assign(n_, 0);
    dev_free_.assign(nd_, 0);
    level_.assign(nd_, 0);
    if (!req.initial_memory.empty()) level_ = req.initial_memory;
    est_.assign(n_, 0);
    for (int i = 0; i < n_; ++i)
      if (req.pinned(i)) pins_.push_back(i);
  }

  SolveResult run() {
    SolveResult r;
    for (int d = 0; d < nd_; ++d) {
      if (level_[d] > req_.mem_capacity) {
        r.status = SolveStatus::kInfeasible;
        return r;
      }
    }
    const bool found = dfs();
    r.stats = stats_;
    if (found) {
      r.status = SolveStatus::kSatisfiable;
      r.starts = start_;
    } else {
      r.status = timed_out_ ? SolveStatus::kTimeout : SolveStatus::kInfeasible;
      r.node_limited = node_limited_;
    }
    return r;
  }

 private:
  bool dfs() {
    if ((stats_.nodes++ & 1023) == 0 && deadline_.expired()) timed_out_ = true;
    if (req_.node_limit > 0 && stats_.nodes > req_.node_limit) {
      timed_out_ = true;
      node_limited_ = true;
    }
    if (timed_out_) return false;
    if (started_ == n_) return true;
    if (!bounds_hold()) {
      ++stats_.failures;
      return false;
    }
    const std::string key = state_key();
    const Time remaining = horizon_ - now_;
    if (auto it = memo_.find(key); it != memo_.end() && it->second >= remaining) {
      ++stats_.failures;
      return false;
    }

    bool ok = false;
    const int forced = due_pin();
    if (forced == -2) {
      ok = false;
    } else if (forced >= 0) {
      // A pinned block due now has exactly one option.
      if (available(forced)) {
        const size_t mark = cleared_.size();
        begin(forced);
        ok = dfs();
        if (ok) return true;
        undo_begin(forced, mark);
      }
    } else if (const int pick = first_available(); pick >= 0) {
      const size_t mark = cleared_.size();
      begin(pick);
      ok = dfs();
      if (ok) return true;
      undo_begin(pick, mark);
      if (!timed_out_) {
        deferred_[pick] = 1;
        ok = dfs();
        deferred_[pick] = 0;
      }
    } else {
      const Time next = next_event();
      if (next > now_) {
        const Time saved = now_;
        now_ = next;
        ok = dfs();
        now_ = saved;
      }
    }
    if (!ok && !timed_out_) {
      ++stats_.failures;
      if (memo_.size() < kMaxMemoEntries) {
        Time& slot = memo_[key];
        slot = std::max(slot, remaining);
      }
    }
    return ok;
  }

  // Index of an unstarted pinned block due now, -2 if one was missed, else -1.
  int due_pin() const {
    for (int i : pins_) {
      if (start_[i] >= 0) continue;
      if (req_.fixed_start[i] < now_) return -2;
      if (req_.fixed_start[i] == now_) return i;
    }
    return -1;
  }

  bool available(int i) const {
    if (start_[i] >= 0 || deferred_[i]) return false;
    if (req_.pinned(i) && req_.fixed_start[i] != now_) return false;
    const SolveInstance& x = req_.instances[i];
    // Must not run into a pinned block on a shared device.
    for (int y : pins_) {
      if (start_[y] >= 0 || y == i) continue;
      if ((req_.instances[y].devices & x.devices) &&
          now_ + x.time > req_.fixed_start[y])
        return false;
    }
    for (auto [p, lag] : preds_[i])
      if (start_[p] < 0 || start_[p] + lag > now_) return false;
    for (DeviceMask m = x.devices; m; m &= m - 1) {
      const int d = std::countr_zero(m);
      if (dev_free_[d] > now_) return false;
      if (level_[d] + x.mem > req_.mem_capacity) return false;
    }
    return true;
  }

  int first_available() const {
    for (int i : priority_)
      if (available(i)) return i;
    return -1;
  }

  void begin(int i) {
    const SolveInstance& x = req_.instances[i];
    start_[i] = now_;
    ++started_;
    for (DeviceMask m = x.devices; m; m &= m - 1) {
      const int d = std::countr_zero(m);
      saved_free_.push_back(dev_free_[d]);
      dev_free_[d] = now_ + x.time;
      level_[d] += x.mem;
    }
    for (int j = 0; j < n_; ++j) {
      if (deferred_[j] && (req_.instances[j].devices & x.devices)) {
        deferred_[j] = 0;
        cleared_.push_back(j);
      }
    }
  }

  void undo_begin(int i, size_t mark) {
    const SolveInstance& x = req_.instances[i];
    while (cleared_.size() > mark) {
      deferred_[cleared_.back()] = 1;
      cleared_.pop_back();
    }
    // Restore in reverse device order.
    for (int d = nd_ - 1; d >= 0; --d) {
      if (!(x.devices >> d & 1)) continue;
      dev_free_[d] = saved_free_.back();
      saved_free_.pop_back();
      level_[d] -= x.mem;
    }
    start_[i] = -1;
    --started_;
  }

  Time next_event() const {
    Time next = std::numeric_limits<Time>::max();
    for (int i = 0; i < n_; ++i) {
      if (start_[i] < 0) continue;
      const Time end = start_[i] + req_.instances[i].time;
      if (end > now_) next = std::min(next, end);
      for (auto [v, lag] : succs_[i])
        if (start_[v] < 0 && start_[i] + lag > now_)
          next = std::min(next, start_[i] + lag);
    }
    for (int y : pins_)
      if (start_[y] < 0 && req_.fixed_start[y] > now_)
        next = std::min(next, req_.fixed_start[y]);
    return next == std::numeric_limits<Time>::max() ? now_ : next;
  }

  bool bounds_hold() {
    constexpr Time kInf = std::numeric_limits<Time>::max() / 4;
    min_est_.assign(nd_, kInf);
    load_.assign(nd_, 0);
    min_rest_.assign(nd_, kInf);
    for (int u : topo_) {
      if (start_[u] >= 0) continue;
      const SolveInstance& x = req_.instances[u];
      Time e = now_;
      for (auto [p, lag] : preds_[u])
        e = std::max(e, (start_[p] >= 0 ? start_[p] : est_[p]) + lag);
      for (DeviceMask m = x.devices; m; m &= m - 1)
        e = std::max(e, dev_free_[std::countr_zero(m)]);
      if (req_.pinned(u)) {
        if (e > req_.fixed_start[u]) return false;
        e = req_.fixed_start[u];
      }
      est_[u] = e;
      if (e + tail_[u] > horizon_) return false;
      for (DeviceMask m = x.devices; m; m &= m - 1) {
        const int d = std::countr_zero(m);
        min_est_[d] = std::min(min_est_[d], e);
        load_[d] += x.time;
        min_rest_[d] = std::min(min_rest_[d], tail_[u] - x.time);
      }
    }
    for (int d = 0; d < nd_; ++d)
      if (load_[d] > 0 && min_est_[d] + load_[d] + min_rest_[d] > horizon_)
        return false;
    return true;
  }

  std::string state_key() const {
    std::string key;
    key.reserve(static_cast<size_t>(n_) / 4 + 16);
    unsigned char acc = 0;
    int bits = 0;
    auto push_bit = [&](bool b) {
      acc = static_cast<unsigned char>(acc | (b ? 1u : 0u) << bits);
      if (++bits == 8) {
        key.push_back(static_cast<char>(acc));
        acc = 0;
        bits = 0;
      }
    };
    for (int i = 0; i < n_; ++i) {
      push_bit(start_[i] >= 0);
      push_bit(deferred_[i]);
    }
    if (bits) key.push_back(static_cast<char>(acc));
    // Pinned blocks make the state depend on absolute time.
    if (!pins_.empty()) key.append(reinterpret_cast<const char*>(&now_), sizeof(now_));
    for (int i = 0; i < n_; ++i) {
      if (start_[i] < 0) continue;
      Time busy_until = start_[i] + req_.instances[i].time;
      for (auto [v, lag] : succs_[i]) busy_until = std::max(busy_until, start_[i] + lag);
      if (busy_until <= now_) continue;
      const Time rel = busy_until - now_;
      key.append(reinterpret_cast<const char*>(&i), sizeof(i));
      key.append(reinterpret_cast<const char*>(&rel), sizeof(rel));
    }
    return key;
  }

  const SolveRequest& req_;
  const Time horizon_;
  const Deadline& deadline_;
  const int n_;
  const int nd_;

  std::vector<std::vector<std::pair<int, Time>>> preds_, succs_;
  std::vector<int> topo_;
  std::vector<Time> tail_;
  std::vector<int> priority_;
  std::vector<int> pins_;

  Time now_ = 0;
  int started_ = 0;
  std::vector<Time> start_;
  std::vector<char> deferred_;
  std::vector<Time> dev_free_;
  std::vector<Mem> level_;
  std::vector<int> cleared_;
  std::vector<Time> saved_free_;

  std::vector<Time> est_, min_est_, load_, min_rest_;
  std::unordered_map<std::string, Time> memo_;
  SolverStats stats_;
  bool timed_out_ = false;
  bool node_limited_ = false;
};

class EventBackend final : public SolverBackend {
 public:
  std::string_view name() const override { return "event"; }

  bool supports(const SolveRequest& req) const override {
    if (req.device_span) return false;
    return std::all_of(req.edges.begin(), req.edges.end(),
                       [](const SolveEdge& e) { return e.lag >= 0; });
  }

  SolveResult decide(const SolveRequest& req, Time horizon,
                     const Deadline& deadline) const override {
    return EventSearch(req, horizon, deadline).run();
  }
};

}  // namespace

std::unique_ptr<SolverBackend> make_event_backend() {
  return std::make_unique<EventBackend>();
}

}  // namespace pipetile::internal
