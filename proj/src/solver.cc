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

#include "pipetile/solver.h"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <map>
#include <queue>

#include "backends.h"
#include "pipetile/errors.h"

namespace pipetile {
namespace internal {

std::vector<SolveEdge> all_edges(const SolveRequest& req) {
  std::vector<SolveEdge> edges = req.edges;
  for (size_t i = 0; i < req.order_after.size(); ++i) {
    const int prev = req.order_after[i];
    if (prev >= 0)
      edges.push_back({prev, static_cast<int>(i), req.instances[prev].time});
  }
  return edges;
}

std::vector<int> topo_order(int n, const std::vector<SolveEdge>& edges) {
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  for (const SolveEdge& e : edges) {
    succ[e.from].push_back(e.to);
    ++indeg[e.to];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<int> order;
  while (!ready.empty()) {
    const int u = ready.top();
    ready.pop();
    order.push_back(u);
    for (int v : succ[u])
      if (--indeg[v] == 0) ready.push(v);
  }
  if (static_cast<int>(order.size()) != n) order.clear();
  return order;
}

Time objective_of(const SolveRequest& req, const std::vector<Time>& starts) {
  Time best = 0;
  for (size_t i = 0; i < starts.size(); ++i)
    best = std::max(best, starts[i] + req.instances[i].time);
  return best;
}

}  // namespace internal

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kSatisfiable:
      return "satisfiable";
    case SolveStatus::kInfeasible:
      return "infeasible";
    case SolveStatus::kTimeout:
      return "timeout";
  }
  return "infeasible";
}

double budget_seconds_from_env(double fallback) {
  const char* v = std::getenv("TESSEL_BUDGET_SECS");
  if (v == nullptr || *v == '\0') return fallback;
  char* end = nullptr;
  const double secs = std::strtod(v, &end);
  if (end == v || *end != '\0' || !(secs >= 0)) return fallback;
  return secs;
}

Deadline::Deadline(double seconds) {
  using namespace std::chrono;
  const auto now = steady_clock::now();
  // Clamp so that huge budgets do not overflow the clock.
  const double capped = std::clamp(seconds, 0.0, 1e7);
  at_ = now + duration_cast<steady_clock::duration>(duration<double>(capped));
}

namespace {

// True when, for the dependency a -> b, relabeling each stage's instances
// in start order keeps every in-set dependency satisfied. That holds when the
// shared micro-batches are all of b's and a prefix of a's (warmup-like
// sets), or all of a's and a suffix of b's (cooldown-like sets).
bool relabel_safe(const std::vector<int>& la, const std::vector<int>& lb) {
  std::vector<int> common;
  std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(),
                        std::back_inserter(common));
  auto is_prefix = [&](const std::vector<int>& of) {
    return std::equal(common.begin(), common.end(), of.begin());
  };
  auto is_suffix = [&](const std::vector<int>& of) {
    return std::equal(common.rbegin(), common.rend(), of.rbegin());
  };
  if (common == lb && is_prefix(la)) return true;
  if (common == la && is_suffix(lb)) return true;
  return false;
}

}  // namespace

SolveRequest SolveRequest::FromInstances(const PlacementSpec& p,
                                         std::span<const BlockInstance> xs,
                                         std::span<const Mem> initial_memory) {
  SolveRequest req;
  req.num_devices = p.num_devices();
  req.mem_capacity = p.mem_capacity();
  if (!initial_memory.empty())
    req.initial_memory.assign(initial_memory.begin(), initial_memory.end());
  std::map<std::pair<int, int>, int> index;
  for (const BlockInstance& x : xs) {
    const BlockSpec& b = p.block(x.stage);
    if (!index.emplace(std::pair{x.stage, x.mb},
                       static_cast<int>(req.instances.size()))
             .second)
      throw InvalidArgument("duplicate instance in solve request");
    req.instances.push_back(
        {x.stage, x.mb, b.time_cost, p.device_mask(x.stage), b.mem_delta});
  }
  for (const Dep& e : p.deps()) {
    for (const auto& [key, from] : index) {
      if (key.first != e.from) continue;
      auto it = index.find({e.to, key.second});
      if (it != index.end())
        req.edges.push_back({from, it->second, p.block(e.from).time_cost});
    }
  }

  std::vector<std::vector<int>> labels(p.num_stages());
  for (const auto& [key, idx] : index) labels[key.first].push_back(key.second);
  bool safe = true;
  for (const Dep& e : p.deps())
    safe = safe && relabel_safe(labels[e.from], labels[e.to]);
  if (safe) {
    req.order_after.assign(req.instances.size(), -1);
    for (int stage = 0; stage < p.num_stages(); ++stage) {
      const auto& l = labels[stage];
      for (size_t k = 1; k < l.size(); ++k)
        req.order_after[index.at({stage, l[k]})] = index.at({stage, l[k - 1]});
    }
  }
  return req;
}

void SolveRequest::check() const {
  const int n = static_cast<int>(instances.size());
  if (num_devices < 1 || num_devices > kMaxDevices)
    throw InvalidArgument("solve request: bad device count");
  for (const SolveInstance& x : instances) {
    if (x.time < 1) throw InvalidArgument("solve request: time cost < 1");
    if (x.devices == 0) throw InvalidArgument("solve request: empty device set");
    if (num_devices < kMaxDevices && (x.devices >> num_devices) != 0)
      throw InvalidArgument("solve request: device id out of range");
  }
  for (const SolveEdge& e : edges)
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
      throw InvalidArgument("solve request: edge endpoint out of range");
  if (!order_after.empty() && static_cast<int>(order_after.size()) != n)
    throw InvalidArgument("solve request: order_after size mismatch");
  if (!fixed_start.empty() && static_cast<int>(fixed_start.size()) != n)
    throw InvalidArgument("solve request: fixed_start size mismatch");
  if (!initial_memory.empty()) {
    if (static_cast<int>(initial_memory.size()) != num_devices)
      throw InvalidArgument("solve request: initial memory size mismatch");
  }
  if (mode == SolveMode::kDecide && !horizon)
    throw InvalidArgument("solve request: decide mode needs a horizon");
  if (internal::topo_order(n, internal::all_edges(*this)).empty() && n > 0)
    throw InvalidArgument("solve request: cyclic constraints");
}

Time makespan_lower_bound(const SolveRequest& req) {
  const int n = static_cast<int>(req.instances.size());
  if (n == 0) return 0;
  const auto edges = internal::all_edges(req);
  const auto order = internal::topo_order(n, edges);
  std::vector<std::vector<const SolveEdge*>> in(n);
  for (const SolveEdge& e : edges) in[e.to].push_back(&e);
  std::vector<Time> est(n, 0);
  Time lb = 0;
  for (int u : order) {
    for (const SolveEdge* e : in[u]) est[u] = std::max(est[u], est[e->from] + e->lag);
    if (req.pinned(u)) est[u] = std::max(est[u], req.fixed_start[u]);
    lb = std::max(lb, est[u] + req.instances[u].time);
  }
  std::vector<Time> load(req.num_devices, 0);
  for (const SolveInstance& x : req.instances)
    for (DeviceMask m = x.devices; m; m &= m - 1) load[std::countr_zero(m)] += x.time;
  for (Time l : load) lb = std::max(lb, l);
  return lb;
}

std::unique_ptr<SolverBackend> make_backend(BackendKind kind) {
  switch (kind) {
    case BackendKind::kEvent:
      return internal::make_event_backend();
    case BackendKind::kDifference:
      return internal::make_difference_backend();
    case BackendKind::kDisjunctive:
      return internal::make_disjunctive_backend();
  }
  return internal::make_event_backend();
}

const SolverBackend& default_backend() {
  static const std::unique_ptr<SolverBackend> backend =
      make_backend(BackendKind::kDisjunctive);
  return *backend;
}

BackendKind backend_from_string(std::string_view s) {
  if (s == "event") return BackendKind::kEvent;
  if (s == "difference") return BackendKind::kDifference;
  if (s == "disjunctive") return BackendKind::kDisjunctive;
  throw InvalidArgument("unknown solver backend '" + std::string(s) + "'");
}

SolveResult solve_decide(const SolveRequest& req,
                         const SolverBackend& backend) {
  req.check();
  if (!req.horizon) throw InvalidArgument("solve_decide needs a horizon");
  if (!backend.supports(req))
    throw InvalidArgument(std::string(backend.name()) +
                          " backend cannot handle this request");
  const Deadline deadline(req.budget_seconds);
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult r = backend.decide(req, *req.horizon, deadline);
  r.stats.decide_calls = 1;
  r.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.has_solution()) r.objective = internal::objective_of(req, r.starts);
  return r;
}

SolveResult solve_min_makespan(const SolveRequest& req,
                               const SolverBackend& backend) {
  req.check();
  if (!backend.supports(req))
    throw InvalidArgument(std::string(backend.name()) +
                          " backend cannot handle this request");
  const auto t0 = std::chrono::steady_clock::now();
  const Deadline deadline(req.budget_seconds);
  SolveResult out;
  auto finish = [&](SolveStatus status) {
    out.status = status;
    out.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (out.has_solution()) out.objective = internal::objective_of(req, out.starts);
    return out;
  };
  if (req.instances.empty()) return finish(SolveStatus::kOptimal);

  Time lo = makespan_lower_bound(req);
  // Past the last pinned block, idle time can always be squeezed out.
  Time hi = 0;
  for (size_t i = 0; i < req.instances.size(); ++i) {
    if (req.pinned(static_cast<int>(i)))
      hi = std::max(hi, req.fixed_start[i] + req.instances[i].time);
  }
  for (size_t i = 0; i < req.instances.size(); ++i)
    if (!req.pinned(static_cast<int>(i))) hi += req.instances[i].time;
  for (const SolveEdge& e : req.edges)
    hi += std::max<Time>(0, e.lag - req.instances[e.from].time);
  hi = std::max(hi, lo);
  if (req.horizon) hi = std::min(hi, *req.horizon);
  if (hi < lo) return finish(SolveStatus::kInfeasible);

  auto probe = [&](Time h) {
    SolveResult r = backend.decide(req, h, deadline);
    out.stats += r.stats;
    ++out.stats.decide_calls;
    return r;
  };

  SolveResult first = probe(hi);
  if (first.status == SolveStatus::kTimeout) {
    out.node_limited = first.node_limited;
    return finish(SolveStatus::kTimeout);
  }
  if (first.status != SolveStatus::kSatisfiable)
    return finish(SolveStatus::kInfeasible);
  out.starts = std::move(first.starts);
  hi = internal::objective_of(req, out.starts);
  bool proven = true;
  while (lo < hi) {
    const Time mid = lo + (hi - lo) / 2;
    SolveResult r = probe(mid);
    if (r.status == SolveStatus::kSatisfiable) {
      out.starts = std::move(r.starts);
      hi = internal::objective_of(req, out.starts);
    } else if (r.status == SolveStatus::kInfeasible) {
      lo = mid + 1;
    } else if (r.node_limited) {
      lo = mid + 1;
      proven = false;
    } else {
      return finish(SolveStatus::kTimeout);
    }
  }
  return finish(proven ? SolveStatus::kOptimal : SolveStatus::kSatisfiable);
}

std::vector<TimedInstance> to_timed(const SolveRequest& req,
                                    std::span<const Time> starts) {
  std::vector<TimedInstance> out;
  out.reserve(starts.size());
  for (size_t i = 0; i < starts.size(); ++i)
    out.push_back({req.instances[i].stage, req.instances[i].mb, starts[i]});
  return out;
}

}  // namespace pipetile
