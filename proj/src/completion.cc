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

#include "pipetile/completion.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <climits>
#include <thread>

#include "pipetile/errors.h"
#include "pipetile/extension.h"

namespace pipetile {

std::vector<BlockInstance> warmup_blocks(const Assignment& a) {
  std::vector<BlockInstance> out;
  for (size_t i = 0; i < a.size(); ++i)
    for (int n = 0; n < a[i]; ++n) out.push_back({static_cast<int>(i), n});
  return out;
}

std::vector<BlockInstance> cooldown_blocks(const Assignment& a, int nr) {
  std::vector<BlockInstance> out;
  for (size_t i = 0; i < a.size(); ++i)
    for (int n = a[i] + 1; n < nr; ++n) out.push_back({static_cast<int>(i), n});
  return out;
}

std::vector<Mem> cooldown_entry_memory(const PlacementSpec& p,
                                       const Repetend& r,
                                       int num_microbatches) {
  if (num_microbatches < r.nr)
    throw InvalidArgument("micro-batch count below the repetend's");
  std::vector<Mem> mem = entry_memory(p, r.assignment);
  const Mem copies = num_microbatches - r.nr + 1;
  for (int d = 0; d < p.num_devices(); ++d) mem[d] += copies * p.net_mem_delta(d);
  return mem;
}

int max_inflight(const PlacementSpec& p) {
  int best = INT_MAX;
  for (int d = 0; d < p.num_devices(); ++d) {
    Mem level = 0, peak = 0;
    for (int stage : p.topo_order()) {
      if (!(p.device_mask(stage) >> d & 1)) continue;
      level += p.block(stage).mem_delta;
      peak = std::max(peak, level);
    }
    if (peak <= 0) continue;
    const Mem c = p.mem_capacity() / peak;
    best = static_cast<int>(std::min<Mem>(best, c));
  }
  return best;
}

nlohmann::json report_to_json(const SearchReport& r) {
  nlohmann::json cands = nlohmann::json::array();
  for (const CandidateRecord& c : r.candidates) {
    nlohmann::json j = {{"assignment", c.assignment},
                        {"nr", c.nr},
                        {"outcome", c.outcome},
                        {"improved", c.improved}};
    j["period"] = c.period ? nlohmann::json(*c.period) : nlohmann::json(nullptr);
    cands.push_back(std::move(j));
  }
  return {{"lower_bound", r.lower_bound},
          {"inflight_limit", r.inflight_limit},
          {"nr_limit", r.nr_limit},
          {"early_exit", r.early_exit},
          {"timed_out", r.timed_out},
          {"lazy", r.lazy},
          {"candidates", std::move(cands)},
          {"seconds",
           {{"repetend", r.repetend_seconds},
            {"warmup", r.warmup_seconds},
            {"cooldown", r.cooldown_seconds},
            {"concat", r.concat_seconds}}},
          {"solver",
           {{"nodes", r.stats.nodes},
            {"failures", r.stats.failures},
            {"decide_calls", r.stats.decide_calls},
            {"wall_seconds", r.stats.wall_seconds}}}};
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Time span_of(const PlacementSpec& p, std::span<const TimedInstance> xs) {
  if (xs.empty()) return 0;
  Time lo = xs[0].start, hi = 0;
  for (const TimedInstance& x : xs) {
    lo = std::min(lo, x.start);
    hi = std::max(hi, x.start + p.block(x.stage).time_cost);
  }
  return hi - lo;
}

// Solves one completion phase. Empty optional: no schedule fits memory.
std::optional<std::vector<TimedInstance>> solve_phase(
    const PlacementSpec& p, const std::vector<BlockInstance>& xs,
    const std::vector<Mem>& initial_memory, bool optimize, double budget,
    SolverStats& stats, const char* phase) {
  if (xs.empty()) return std::vector<TimedInstance>{};
  SolveRequest req = SolveRequest::FromInstances(p, xs, initial_memory);
  req.budget_seconds = budget;
  SolveResult r;
  if (optimize) {
    req.mode = SolveMode::kOptimize;
    r = solve_min_makespan(req);
  } else {
    req.mode = SolveMode::kDecide;
    Time h = 0;
    for (const SolveInstance& x : req.instances) h += x.time;
    req.horizon = h;
    r = solve_decide(req);
  }
  stats += r.stats;
  if (r.status == SolveStatus::kTimeout)
    throw TimeoutError(std::string(phase) + " completion ran out of budget");
  if (!r.has_solution()) return std::nullopt;
  return to_timed(req, r.starts);
}

struct Phases {
  std::vector<TimedInstance> warmup;
  std::vector<TimedInstance> cooldown;
};

std::optional<Phases> complete(const PlacementSpec& p, const Repetend& r,
                               bool optimize, double budget,
                               SearchReport& report) {
  Phases out;
  auto t0 = std::chrono::steady_clock::now();
  auto w = solve_phase(p, warmup_blocks(r.assignment), {}, optimize, budget,
                       report.stats, "warmup");
  report.warmup_seconds += seconds_since(t0);
  if (!w) return std::nullopt;
  t0 = std::chrono::steady_clock::now();
  auto c = solve_phase(p, cooldown_blocks(r.assignment, r.nr),
                       cooldown_entry_memory(p, r, r.nr), optimize, budget,
                       report.stats, "cooldown");
  report.cooldown_seconds += seconds_since(t0);
  if (!c) return std::nullopt;
  out.warmup = std::move(*w);
  out.cooldown = std::move(*c);
  return out;
}

std::string_view outcome_name(RepetendStatus s) {
  switch (s) {
    case RepetendStatus::kFound:
      return "found";
    case RepetendStatus::kNoBetter:
      return "no-better";
    case RepetendStatus::kInfeasible:
      return "infeasible";
    case RepetendStatus::kTimeout:
      return "timeout";
  }
  return "infeasible";
}

// Effort cap for each solve against pinned copies. Past it the offset or
// horizon in question counts as unreachable, which only costs quality.
constexpr std::int64_t kContextNodeLimit = 20000;

struct Pinned {
  std::vector<BlockInstance> xs;
  std::vector<Time> at;  // -1 for free instances
};

void pin_copies(Pinned& ctx, const Repetend& r, Time copy_at, int copies) {
  for (int k = 0; k < copies; ++k) {
    for (size_t i = 0; i < r.assignment.size(); ++i) {
      ctx.xs.push_back({static_cast<int>(i), r.assignment[i] + k});
      ctx.at.push_back(copy_at + r.starts[i] + k * r.period);
    }
  }
}

void pin_timed(Pinned& ctx, std::span<const TimedInstance> xs) {
  for (const TimedInstance& x : xs) {
    ctx.xs.push_back({x.stage, x.mb});
    ctx.at.push_back(x.start);
  }
}

SolveResult solve_pinned(const PlacementSpec& p, const Pinned& ctx,
                         std::optional<Time> horizon, double budget,
                         SolverStats& stats, SolveRequest& req) {
  req = SolveRequest::FromInstances(p, ctx.xs);
  req.fixed_start = ctx.at;
  req.node_limit = kContextNodeLimit;
  req.budget_seconds = budget;
  SolveResult r;
  if (horizon) {
    req.mode = SolveMode::kDecide;
    req.horizon = horizon;
    r = solve_decide(req);
  } else {
    r = solve_min_makespan(req);
  }
  stats += r.stats;
  return r;
}

Time sum_time(const PlacementSpec& p, std::span<const BlockInstance> xs) {
  Time t = 0;
  for (const BlockInstance& x : xs) t += p.block(x.stage).time_cost;
  return t;
}

// Warmup and cooldown solved against pinned repetend copies, so each phase
// fits into the gaps the copies leave. Empty optional when the result does
// not survive extension; callers then fall back to concat_phases.
std::optional<Schedule> complete_in_context(
    const std::shared_ptr<const PlacementSpec>& pp, const Repetend& r,
    double budget, SearchReport& report) {
  const PlacementSpec& p = *pp;
  const Assignment& a = r.assignment;
  const int witness = tiling_witness_copies(p, a);
  const Time copy_span = span_of(p, tile_repetend(a, r.starts, r.period, 1));

  // Warmup: the earliest copy-0 offset that leaves room for it.
  auto t0 = std::chrono::steady_clock::now();
  const std::vector<BlockInstance> wx = warmup_blocks(a);
  const Time w_total = sum_time(p, wx);
  std::vector<TimedInstance> warmup;
  Time copy_at = 0;
  if (!wx.empty()) {
    // Moving the copies later never hurts: the same warmup shifted along
    // still fits. Binary search on the copy-0 offset.
    auto try_at = [&](Time at) -> std::optional<std::vector<TimedInstance>> {
      Pinned ctx;
      ctx.xs = wx;
      ctx.at.assign(wx.size(), -1);
      pin_copies(ctx, r, at, witness);
      SolveRequest req;
      const Time horizon = at + witness * r.period + copy_span + w_total;
      SolveResult res = solve_pinned(p, ctx, horizon, budget, report.stats, req);
      if (res.status == SolveStatus::kTimeout && !res.node_limited)
        throw TimeoutError("warmup completion ran out of budget");
      if (!res.has_solution()) return std::nullopt;
      std::vector<TimedInstance> out;
      for (const TimedInstance& x : to_timed(req, res.starts))
        if (x.mb < a[x.stage]) out.push_back(x);
      return out;
    };
    Time lo = 0, hi = w_total;
    auto best = try_at(hi);
    if (!best) {
      report.warmup_seconds += seconds_since(t0);
      return std::nullopt;
    }
    while (lo < hi) {
      const Time mid = lo + (hi - lo) / 2;
      if (auto w = try_at(mid)) {
        best = std::move(w);
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    copy_at = hi;
    warmup = std::move(*best);
    report.warmup_seconds += seconds_since(t0);
  }

  // Cooldown: time-optimal after the last copy; checked against every
  // extension length up to the point where the pattern repeats.
  t0 = std::chrono::steady_clock::now();
  const std::vector<BlockInstance> cx = cooldown_blocks(a, r.nr);
  const Time c_total = sum_time(p, cx);
  Time w_end = 0;
  for (const TimedInstance& x : warmup)
    w_end = std::max(w_end, x.start + p.block(x.stage).time_cost);
  const int extra = witness + static_cast<int>(
                                  (w_end + copy_span + c_total + r.period - 1) /
                                  r.period);
  auto assemble = [&](const std::vector<TimedInstance>& cool, int m) {
    std::vector<TimedInstance> xs = warmup;
    const auto tiled = tile_repetend(a, r.starts, r.period, m + 1, copy_at);
    xs.insert(xs.end(), tiled.begin(), tiled.end());
    for (const TimedInstance& x : cool)
      xs.push_back({x.stage, x.mb + m, x.start + m * r.period});
    return xs;
  };
  std::optional<std::vector<TimedInstance>> cooldown;
  for (int ctx_m = 0; ctx_m <= std::min(extra, 2) && !cooldown; ++ctx_m) {
    std::vector<TimedInstance> cool;
    if (!cx.empty()) {
      Pinned ctx;
      pin_timed(ctx, warmup);
      pin_copies(ctx, r, copy_at, ctx_m + 1);
      for (const BlockInstance& x : cx) {
        ctx.xs.push_back({x.stage, x.mb + ctx_m});
        ctx.at.push_back(-1);
      }
      SolveRequest req;
      SolveResult res = solve_pinned(p, ctx, std::nullopt, budget, report.stats, req);
      if (res.status == SolveStatus::kTimeout && !res.node_limited)
        throw TimeoutError("cooldown completion ran out of budget");
      if (!res.has_solution()) continue;
      for (const TimedInstance& x : to_timed(req, res.starts)) {
        if (x.mb > a[x.stage] + ctx_m)
          cool.push_back({x.stage, x.mb - ctx_m, x.start - ctx_m * r.period});
      }
    }
    bool ok = true;
    for (int m = 0; m <= extra && ok; ++m)
      ok = validate_instances(p, assemble(cool, m)).empty();
    if (ok) cooldown = std::move(cool);
  }
  report.cooldown_seconds += seconds_since(t0);
  if (!cooldown) return std::nullopt;

  const auto xs = assemble(*cooldown, 0);
  Time lo = xs[0].start;
  for (const TimedInstance& x : xs) lo = std::min(lo, x.start);
  Schedule s(pp, r.nr);
  for (const TimedInstance& x : xs) s.set_start(x.stage, x.mb, x.start - lo);
  const Time first = *std::min_element(r.starts.begin(), r.starts.end());
  s.repetend = RepetendAnnotation{copy_at + first - lo,
                                  copy_at + first - lo + copy_span, r.period,
                                  r.nr, a};
  return s;
}

}  // namespace

Schedule concat_phases(std::shared_ptr<const PlacementSpec> pp,
                       const Repetend& r,
                       std::span<const TimedInstance> warmup,
                       std::span<const TimedInstance> cooldown) {
  const PlacementSpec& p = *pp;
  const Assignment& a = r.assignment;
  const Time period = r.period;
  const Time copy_span = span_of(p, tile_repetend(a, r.starts, period, 1));
  Time warmup_end = 0;
  for (const TimedInstance& x : warmup)
    warmup_end = std::max(warmup_end, x.start + p.block(x.stage).time_cost);
  const Time cool_span = span_of(p, cooldown);
  const int base = tiling_witness_copies(p, a);
  auto ceil_div = [](Time x, Time y) { return static_cast<int>((x + y - 1) / y); };

  auto plan = [&](Time copy_at, int copies, std::optional<Time> cool_at,
                  int shift) {
    std::vector<TimedInstance> xs(warmup.begin(), warmup.end());
    const auto tiled = tile_repetend(a, r.starts, period, copies, copy_at);
    xs.insert(xs.end(), tiled.begin(), tiled.end());
    if (cool_at) {
      for (const TimedInstance& x : cooldown)
        xs.push_back({x.stage, x.mb + shift, x.start + *cool_at + shift * period});
    }
    return xs;
  };
  auto valid = [&](const std::vector<TimedInstance>& xs) {
    return validate_instances(p, xs).empty();
  };

  // Copy 0: earliest offset keeping the warmup plus any number of copies
  // valid. Placing it after the whole warmup always works.
  const int copies_checked = base + ceil_div(warmup_end + copy_span, period);
  Time copy_at = 0;
  while (copy_at < warmup_end && !valid(plan(copy_at, copies_checked, {}, 0)))
    ++copy_at;

  // Cooldown: earliest offset valid for every extension length. Past the
  // checked range the cooldown meets the same copies, shifted.
  const int extra = base + ceil_div(warmup_end + copy_span + cool_span, period);
  const Time cool_limit = std::max(warmup_end, copy_at + copy_span);
  Time cool_at = 0;
  for (; cool_at < cool_limit; ++cool_at) {
    bool ok = true;
    for (int m = 0; m <= extra && ok; ++m)
      ok = valid(plan(copy_at, m + 1, cool_at, m));
    if (ok) break;
  }

  auto xs = plan(copy_at, 1, cool_at, 0);
  Time lo = xs.empty() ? 0 : xs[0].start;
  for (const TimedInstance& x : xs) lo = std::min(lo, x.start);
  Schedule s(std::move(pp), r.nr);
  for (const TimedInstance& x : xs) s.set_start(x.stage, x.mb, x.start - lo);
  RepetendAnnotation ann;
  ann.start = copy_at - lo + *std::min_element(r.starts.begin(), r.starts.end());
  ann.end = copy_at - lo + copy_span +
            *std::min_element(r.starts.begin(), r.starts.end());
  ann.period = period;
  ann.nr = r.nr;
  ann.assignment = a;
  s.repetend = ann;
  return s;
}

namespace {

// Replaces `s` by its left-justified form when that form extends to
// left-justified plans. A left-justified copy 0 may run ahead of the
// pattern; the annotation then records the periodic starts later copies
// use. Without this, executing the plan as soon as each block's inputs and
// devices allow finishes earlier than the plan says.
void tighten(Schedule& s, const Repetend& r) {
  const PlacementSpec& p = s.placement();
  const Assignment& a = r.assignment;
  Schedule t = left_justify(s);
  if (t == s) return;
  const int extra = tiling_witness_copies(p, a) +
                    static_cast<int>((s.makespan() + r.period - 1) / r.period);
  const Schedule far = left_justify(extend(s, r.nr + extra + 1));
  RepetendAnnotation& ann = *t.repetend;
  ann.copy_starts.assign(a.size(), 0);
  ann.start = far.makespan();
  ann.end = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const int stage = static_cast<int>(i);
    ann.copy_starts[i] = far.start(stage, a[i] + 1) - r.period;
    ann.start = std::min(ann.start, ann.copy_starts[i]);
    ann.end = std::max(ann.end, ann.copy_starts[i] + p.block(stage).time_cost);
  }
  bool same = true;
  for (size_t i = 0; i < a.size(); ++i)
    same &= ann.copy_starts[i] == t.start(static_cast<int>(i), a[i]);
  if (same) ann.copy_starts.clear();
  for (int m = 0; m <= extra; ++m) {
    const Schedule e = extend(t, r.nr + m);
    if (!validate_schedule(e).empty() || !(left_justify(e) == e)) return;
  }
  s = std::move(t);
}

std::optional<Schedule> finish_plan(const std::shared_ptr<const PlacementSpec>& pp,
                                    const Repetend& r, double budget,
                                    SearchReport& report) {
  std::optional<Schedule> s = complete_in_context(pp, r, budget, report);
  if (!s) {
    auto ph = complete(*pp, r, /*optimize=*/true, budget, report);
    if (!ph) return std::nullopt;
    const auto t0 = std::chrono::steady_clock::now();
    s = concat_phases(pp, r, ph->warmup, ph->cooldown);
    report.concat_seconds += seconds_since(t0);
  }
  tighten(*s, r);
  return s;
}

}  // namespace

SearchResult search(const PlacementSpec& placement, const SearchOptions& opts) {
  auto pp = std::make_shared<const PlacementSpec>(placement);
  const PlacementSpec& p = *pp;
  SearchReport report;
  report.lazy = opts.lazy;
  report.lower_bound = p.period_lower_bound();
  report.inflight_limit = max_inflight(p);
  report.nr_limit = std::min(report.inflight_limit, std::max(opts.max_nr, 0));
  if (report.inflight_limit < 1)
    throw InfeasibleError(
        "memory capacity cannot hold one micro-batch's blocks on some device");
  if (report.nr_limit < 1) throw InvalidArgument("max_nr must be >= 1");

  // Admits the fully serial repetend.
  Time optimal = p.total_cost() + 1;
  std::optional<Repetend> best;
  std::optional<Schedule> best_plan;
  bool timed_out = false;
  const int jobs = std::max(1, opts.jobs);

  const auto t_loop = std::chrono::steady_clock::now();
  for (int nr = 1; nr <= report.nr_limit && !report.early_exit; ++nr) {
    std::vector<Assignment> batch;
    auto flush = [&]() {
      // Candidates are solved against the bound at batch start and reduced
      // in enumeration order, so the outcome does not depend on `jobs`.
      std::vector<RepetendResult> results(batch.size());
      RepetendOptions ro;
      ro.period_below = optimal;
      ro.budget_seconds = opts.budget_seconds;
      if (jobs == 1 || batch.size() == 1) {
        for (size_t k = 0; k < batch.size(); ++k)
          results[k] = solve_repetend(p, batch[k], ro);
      } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) {
          pool.emplace_back([&]() {
            for (size_t k = next++; k < batch.size(); k = next++)
              results[k] = solve_repetend(p, batch[k], ro);
          });
        }
        for (auto& th : pool) th.join();
      }
      for (size_t k = 0; k < batch.size() && !report.early_exit; ++k) {
        RepetendResult& res = results[k];
        report.stats += res.stats;
        CandidateRecord rec;
        rec.assignment = batch[k];
        rec.nr = nr;
        rec.outcome = outcome_name(res.status);
        if (res.status == RepetendStatus::kTimeout) timed_out = true;
        if (res.repetend) rec.period = res.repetend->period;
        if (res.repetend && res.repetend->period < optimal) {
          std::optional<Schedule> plan;
          bool ok;
          if (opts.lazy) {
            ok = complete(p, *res.repetend, false, opts.budget_seconds, report)
                     .has_value();
          } else {
            plan = finish_plan(pp, *res.repetend, opts.budget_seconds, report);
            ok = plan.has_value();
          }
          if (ok) {
            optimal = res.repetend->period;
            best = std::move(res.repetend);
            best_plan = std::move(plan);
            rec.improved = true;
            if (optimal == report.lower_bound) report.early_exit = true;
          } else {
            rec.outcome = "incomplete";
          }
        } else if (res.repetend) {
          rec.outcome = "no-better";
        }
        report.candidates.push_back(std::move(rec));
      }
      batch.clear();
    };
    iter_repetend_assignments(
        p, nr,
        [&](const Assignment& a) {
          batch.push_back(a);
          if (static_cast<int>(batch.size()) >= jobs) flush();
          return !report.early_exit;
        },
        /*only_new=*/true);
    if (!batch.empty() && !report.early_exit) flush();
  }
  report.timed_out = timed_out;
  report.repetend_seconds =
      seconds_since(t_loop) - report.warmup_seconds - report.cooldown_seconds;

  if (!best) {
    if (timed_out) throw TimeoutError("no repetend candidate finished in budget");
    throw InfeasibleError("no repetend candidate fits the memory capacity");
  }
  if (opts.lazy) {
    best_plan = finish_plan(pp, *best, opts.budget_seconds, report);
    if (!best_plan)
      throw InfeasibleError("completion became infeasible after a feasible check");
  }
  return SearchResult{std::move(*best_plan), std::move(*best), std::move(report)};
}

}  // namespace pipetile
