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

#include "pipetile/baselines.h"

#include <algorithm>
#include <bit>
#include <limits>
#include <map>
#include <tuple>

#include "pipetile/errors.h"

namespace pipetile {
namespace {

using Orders = std::vector<std::vector<BlockInstance>>;

int stage_of(const PlacementSpec& p, const std::string& label) {
  for (const BlockSpec& b : p.blocks())
    if (b.label == label) return b.stage_id;
  throw InvalidArgument("placement has no block '" + label + "'");
}

bool single_device(const PlacementSpec& p, int i) {
  return p.block(i).devices.size() == 1;
}

std::vector<std::vector<int>> predecessors(const PlacementSpec& p) {
  std::vector<std::vector<int>> pred(p.num_stages());
  for (const Dep& e : p.deps()) pred[e.to].push_back(e.from);
  return pred;
}

// Sorts tagged instances and projects them onto devices. A global order
// that respects dependencies projects to device orders that cannot
// deadlock.
template <typename Key>
Orders project(const PlacementSpec& p,
               std::vector<std::pair<Key, BlockInstance>> keyed) {
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  Orders orders(p.num_devices());
  for (const auto& [key, x] : keyed)
    for (int d : p.block(x.stage).devices) orders[d].push_back(x);
  return orders;
}

// 1F1B over a chain of single-device stages, timed on the chain alone.
// `fwd` lists forward chain stages in order and `bwd` the backward ones,
// bwd[k] mirroring fwd[S - 1 - k]. The forward chain must visit the same
// D devices in the same order V times; V > 1 runs the interleaved variant,
// which moves through chunks in groups of D micro-batches and starts with
// 2(D - r - 1) + (V - 1)D forwards on the device of rank r. Returns the
// start of every chain instance, indexed [stage][mb]; other stages stay
// empty.
std::vector<std::vector<Time>> chain_1f1b_times(const PlacementSpec& p,
                                                const std::vector<int>& fwd,
                                                const std::vector<int>& bwd,
                                                int n) {
  const int s = static_cast<int>(fwd.size());
  std::vector<int> rank_dev;
  for (int i : fwd) {
    const int dev = p.block(i).devices[0];
    if (std::find(rank_dev.begin(), rank_dev.end(), dev) != rank_dev.end()) break;
    rank_dev.push_back(dev);
  }
  const int d = static_cast<int>(rank_dev.size());
  const int v = s / d;
  if (v * d != s)
    throw UnsupportedPlacement("forward chain does not loop over one device order");
  for (int k = 0; k < s; ++k) {
    if (p.block(fwd[k]).devices[0] != rank_dev[k % d] ||
        p.block(bwd[s - 1 - k]).devices[0] != rank_dev[k % d])
      throw UnsupportedPlacement("forward chain does not loop over one device order");
  }

  std::vector<int> chain = fwd;
  chain.insert(chain.end(), bwd.begin(), bwd.end());
  std::vector<int> prev(p.num_stages(), -1);
  for (size_t k = 1; k < chain.size(); ++k) prev[chain[k]] = chain[k - 1];

  // Chunk order over micro-batch groups of size d.
  std::vector<std::pair<int, int>> f_seq, b_seq;  // (chunk, mb)
  for (int g = 0; g * d < n; ++g) {
    for (int c = 0; c < v; ++c)
      for (int m = g * d; m < std::min(n, (g + 1) * d); ++m) {
        f_seq.push_back({c, m});
        b_seq.push_back({v - 1 - c, m});
      }
  }
  const int total = static_cast<int>(f_seq.size());
  std::vector<std::vector<BlockInstance>> lanes(d);
  for (int r = 0; r < d; ++r) {
    auto fwd_at = [&](int k) {
      return BlockInstance{fwd[f_seq[k].first * d + r], f_seq[k].second};
    };
    auto bwd_at = [&](int k) {
      return BlockInstance{bwd[s - 1 - (b_seq[k].first * d + r)], b_seq[k].second};
    };
    const int warm = std::min(v == 1 ? d - r - 1 : 2 * (d - r - 1) + (v - 1) * d,
                              total);
    for (int k = 0; k < warm; ++k) lanes[r].push_back(fwd_at(k));
    for (int k = 0; k < total; ++k) {
      if (warm + k < total) lanes[r].push_back(fwd_at(warm + k));
      lanes[r].push_back(bwd_at(k));
    }
  }

  std::vector<std::vector<Time>> start(p.num_stages());
  for (int i : chain) start[i].assign(n, -1);
  std::vector<size_t> pos(d, 0);
  std::vector<Time> free_at(d, 0);
  size_t left = 2 * static_cast<size_t>(s) * n;
  while (left > 0) {
    bool moved = false;
    for (int r = 0; r < d; ++r) {
      while (pos[r] < lanes[r].size()) {
        const BlockInstance x = lanes[r][pos[r]];
        Time t = free_at[r];
        const int q = prev[x.stage];
        if (q >= 0) {
          if (start[q][x.mb] < 0) break;
          t = std::max(t, start[q][x.mb] + p.block(q).time_cost);
        }
        start[x.stage][x.mb] = t;
        free_at[r] = t + p.block(x.stage).time_cost;
        ++pos[r];
        --left;
        moved = true;
      }
    }
    if (!moved) throw InvalidArgument("1F1B chain order deadlocks");
  }
  return start;
}

// 1F1B device orders for a placement whose single-device stages form one
// chain. Blocks on several devices are keyed next to a chain neighbour.
Orders chain_1f1b_orders(const PlacementSpec& p, int n) {
  const std::vector<int> topo = p.topo_order();
  std::vector<int> rank(p.num_stages());
  for (size_t k = 0; k < topo.size(); ++k) rank[topo[k]] = static_cast<int>(k);

  std::vector<int> fwd, bwd;
  for (int i : topo) {
    if (!single_device(p, i)) continue;
    if (p.block(i).kind == BlockKind::kBackward) bwd.push_back(i);
    else fwd.push_back(i);
  }
  if (fwd.empty() || fwd.size() != bwd.size())
    throw UnsupportedPlacement("1F1B needs matching forward and backward chains");

  // Chain stages must be totally ordered.
  const int k = p.num_stages();
  std::vector<std::vector<char>> reach(k, std::vector<char>(k, 0));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    for (const Dep& e : p.deps()) {
      if (e.from != *it) continue;
      reach[*it][e.to] = 1;
      for (int j = 0; j < k; ++j)
        if (reach[e.to][j]) reach[*it][j] = 1;
    }
  }
  std::vector<int> chain = fwd;
  chain.insert(chain.end(), bwd.begin(), bwd.end());
  for (size_t a = 1; a < chain.size(); ++a)
    if (!reach[chain[a - 1]][chain[a]])
      throw UnsupportedPlacement(
          "single-device stages do not form one chain; no 1F1B order");

  const auto vt = chain_1f1b_times(p, fwd, bwd, n);

  // Anchor of each multi-device stage: (chain stage, side).
  std::vector<std::pair<int, int>> anchor(k, {-1, 0});
  for (int i : topo) {
    if (single_device(p, i)) continue;
    int before = -1, after = -1;
    for (int c : chain) {
      if (reach[c][i]) before = c;
      if (reach[i][c] && after < 0) after = c;
    }
    const bool fwd_kind = p.block(i).kind != BlockKind::kBackward;
    if (fwd_kind) anchor[i] = before >= 0 ? std::pair{before, 1} : std::pair{after, -1};
    else anchor[i] = after >= 0 ? std::pair{after, -1} : std::pair{before, 1};
    if (anchor[i].first < 0)
      throw UnsupportedPlacement("block '" + p.block(i).label +
                                 "' has no chain neighbour");
  }

  using Key = std::tuple<Time, int, int, int>;
  std::vector<std::pair<Key, BlockInstance>> keyed;
  for (int m = 0; m < n; ++m) {
    for (int i = 0; i < k; ++i) {
      const auto [c, side] = single_device(p, i) ? std::pair{i, 0} : anchor[i];
      keyed.push_back({{vt[c][m], side, rank[i], m}, {i, m}});
    }
  }
  return project(p, std::move(keyed));
}

// Greedy event-driven list scheduling of `xs`: an idle device takes the
// ready instance that `better` ranks first. Returns the device orders.
template <typename Better>
Orders greedy_orders(const PlacementSpec& p, const std::vector<BlockInstance>& xs,
                     Better better) {
  const auto pred = predecessors(p);
  std::map<BlockInstance, Time> end;
  std::vector<Time> free_at(p.num_devices(), 0);
  Orders orders(p.num_devices());
  std::vector<char> done(xs.size(), 0);
  size_t left = xs.size();
  Time now = 0;
  while (left > 0) {
    bool placed = true;
    while (placed) {
      placed = false;
      int pick = -1;
      for (size_t k = 0; k < xs.size(); ++k) {
        if (done[k]) continue;
        const BlockInstance& x = xs[k];
        bool ready = true;
        for (int q : pred[x.stage]) {
          auto it = end.find({q, x.mb});
          if (it != end.end() && it->second > now) ready = false;
          if (it == end.end()) {
            for (const BlockInstance& y : xs)
              if (y.stage == q && y.mb == x.mb) ready = false;
          }
        }
        for (int d : p.block(x.stage).devices)
          if (free_at[d] > now) ready = false;
        if (!ready) continue;
        if (pick < 0 || better(x, xs[pick])) pick = static_cast<int>(k);
      }
      if (pick >= 0) {
        const BlockInstance& x = xs[pick];
        done[pick] = 1;
        --left;
        end[x] = now + p.block(x.stage).time_cost;
        for (int d : p.block(x.stage).devices) {
          free_at[d] = end[x];
          orders[d].push_back(x);
        }
        placed = true;
      }
    }
    Time next = std::numeric_limits<Time>::max();
    for (const auto& [x, t] : end)
      if (t > now) next = std::min(next, t);
    if (next == std::numeric_limits<Time>::max() && left > 0)
      throw InvalidArgument("greedy scheduling made no progress");
    now = next;
  }
  return orders;
}

Time start_or(const Schedule& s, int stage, int mb) {
  if (mb < 0 || mb >= s.num_microbatches()) return Schedule::kUnset;
  return s.start(stage, mb);
}

}  // namespace

Schedule time_device_orders(std::shared_ptr<const PlacementSpec> pp,
                            int num_microbatches, const Orders& orders) {
  const PlacementSpec& p = *pp;
  const int n = num_microbatches;
  if (static_cast<int>(orders.size()) != p.num_devices())
    throw InvalidArgument("one order per device expected");
  std::vector<int> seen(static_cast<size_t>(p.num_stages()) * n, 0);
  for (int d = 0; d < p.num_devices(); ++d) {
    for (const BlockInstance& x : orders[d]) {
      if (x.stage < 0 || x.stage >= p.num_stages() || x.mb < 0 || x.mb >= n ||
          !(p.device_mask(x.stage) >> d & 1))
        throw InvalidArgument("device order holds a foreign instance");
      ++seen[static_cast<size_t>(x.stage) * n + x.mb];
    }
  }
  for (int i = 0; i < p.num_stages(); ++i)
    for (int m = 0; m < n; ++m)
      if (seen[static_cast<size_t>(i) * n + m] !=
          static_cast<int>(p.block(i).devices.size()))
        throw InvalidArgument("device orders must list each instance once per device");

  const auto pred = predecessors(p);
  Schedule s(pp, n);
  std::vector<size_t> pos(p.num_devices(), 0);
  std::vector<Time> free_at(p.num_devices(), 0);
  size_t left = static_cast<size_t>(p.num_stages()) * n;
  while (left > 0) {
    bool moved = false;
    for (int d = 0; d < p.num_devices(); ++d) {
      if (pos[d] >= orders[d].size()) continue;
      const BlockInstance x = orders[d][pos[d]];
      bool head = true;
      Time t = 0;
      for (int e : p.block(x.stage).devices) {
        if (pos[e] >= orders[e].size() ||
            orders[e][pos[e]].stage != x.stage || orders[e][pos[e]].mb != x.mb)
          head = false;
        else
          t = std::max(t, free_at[e]);
      }
      if (!head) continue;
      bool ready = true;
      for (int q : pred[x.stage]) {
        if (s.start(q, x.mb) == Schedule::kUnset) ready = false;
        else t = std::max(t, s.end(q, x.mb));
      }
      if (!ready) continue;
      s.set_start(x.stage, x.mb, t);
      for (int e : p.block(x.stage).devices) {
        free_at[e] = t + p.block(x.stage).time_cost;
        ++pos[e];
      }
      --left;
      moved = true;
    }
    if (!moved) throw InvalidArgument("device orders deadlock");
  }
  return s;
}

void annotate_steady_state(Schedule& s, const Schedule& reference) {
  s.repetend.reset();
  const Schedule& r = reference;
  const int k = r.num_stages();
  const int n = r.num_microbatches();
  const int lo = n / 4, hi = n - n / 4;
  // Smallest micro-batch stride after which every stage repeats with one
  // common shift in the middle of the reference plan.
  int stride = 0;
  Time period = 0;
  for (int u = 1; u <= std::max(1, n / 4) && stride == 0; ++u) {
    const Time shift = r.start(0, lo + u) - r.start(0, lo);
    bool ok = shift > 0;
    for (int i = 0; i < k && ok; ++i)
      for (int m = lo; m + u < hi && ok; ++m)
        ok = r.start(i, m + u) - r.start(i, m) == shift;
    if (ok) {
      stride = u;
      period = shift;
    }
  }
  if (stride == 0) return;
  const int mid = n / 2;
  const Time window = r.start(0, mid);

  if (stride == 1) {
    // One instance per stage starts inside [window, window + P).
    std::vector<int> at(k, -1);
    for (int i = 0; i < k; ++i) {
      for (int m = 0; m < n; ++m) {
        const Time t = r.start(i, m);
        if (t >= window && t < window + period) at[i] = m;
      }
      if (at[i] < 0) return;
    }
    const int base = *std::min_element(at.begin(), at.end());
    std::vector<int> a(k);
    for (int i = 0; i < k; ++i) a[i] = at[i] - base;
    const int span = *std::max_element(a.begin(), a.end());
    const int last = n - 1 - span;
    // First copy from which every later copy is the previous one shifted.
    int first = last;
    while (first > 0) {
      bool regular = true;
      for (int i = 0; i < k && regular; ++i)
        regular = r.start(i, a[i] + first) - r.start(i, a[i] + first - 1) == period;
      if (!regular) break;
      --first;
    }
    std::vector<int> b(k);
    for (int i = 0; i < k; ++i) b[i] = a[i] + first;
    const int need = span + first + 1;
    if (s.num_microbatches() >= need) {
      // The plan must agree with the reference up to its annotated copy.
      bool same = true;
      for (int i = 0; i < k && same; ++i)
        for (int m = 0; m <= b[i] && same; ++m)
          same = start_or(s, i, m) == r.start(i, m);
      if (same) {
        Time t0 = std::numeric_limits<Time>::max(), t1 = 0;
        for (int i = 0; i < k; ++i) {
          t0 = std::min(t0, s.start(i, b[i]));
          t1 = std::max(t1, s.end(i, b[i]));
        }
        s.repetend = RepetendAnnotation{t0, t1, period, s.num_microbatches(), b};
        return;
      }
    }
  }

  // Window only. Earliest micro-batch from which every stage repeats up
  // to the middle of the reference.
  int from = mid;
  while (from > 0) {
    bool ok = true;
    for (int i = 0; i < k && ok; ++i)
      ok = r.start(i, from - 1 + stride) - r.start(i, from - 1) == period;
    if (!ok) break;
    --from;
  }
  // A window that only sees periodic instances, as early as possible.
  auto sees = [&](const Schedule& x, int i, int m, Time w0) {
    const Time t = x.start(i, m);
    return t < w0 + period && t + x.placement().block(i).time_cost > w0;
  };
  for (int first = from; first + stride <= mid; ++first) {
    const Time w0 = r.start(0, first);
    bool clean = true;
    for (int i = 0; i < k && clean; ++i)
      for (int m = 0; m < n && clean; ++m)
        if (sees(r, i, m, w0)) clean = m >= from && m + stride <= mid;
    if (!clean) continue;
    // The plan must match the reference wherever the window sees either.
    for (int i = 0; i < k; ++i) {
      for (int m = 0; m < n; ++m)
        if (sees(r, i, m, w0) && start_or(s, i, m) != r.start(i, m)) return;
      for (int m = 0; m < s.num_microbatches(); ++m)
        if (sees(s, i, m, w0) && start_or(r, i, m) != s.start(i, m)) return;
    }
    s.repetend = RepetendAnnotation{w0, w0 + period, period,
                                    s.num_microbatches(), {}};
    return;
  }
}

namespace {

int reference_size(int n, int unit) {
  return std::max(n, 0) + 8 * unit + 16;
}

}  // namespace

Schedule gen_1f1b(int num_devices, int num_microbatches, const CostModel& costs) {
  if (num_microbatches < num_devices)
    throw InvalidArgument("1F1B needs at least as many micro-batches as devices");
  auto pp = std::make_shared<const PlacementSpec>(
      make_shape(Shape::kVShape, num_devices, costs));
  auto build = [&](int n) {
    return time_device_orders(pp, n, chain_1f1b_orders(*pp, n));
  };
  Schedule s = build(num_microbatches);
  annotate_steady_state(s, build(reference_size(num_microbatches, num_devices)));
  return s;
}

Schedule gen_gpipe(int num_devices, int num_microbatches, const CostModel& costs) {
  if (num_microbatches < 1) throw InvalidArgument("need at least one micro-batch");
  auto pp = std::make_shared<const PlacementSpec>(
      make_shape(Shape::kVShape, num_devices, costs));
  const PlacementSpec& p = *pp;
  Orders orders(num_devices);
  for (int d = 0; d < num_devices; ++d) {
    const int f = stage_of(p, "f" + std::to_string(d));
    const int b = stage_of(p, "b" + std::to_string(d));
    for (int m = 0; m < num_microbatches; ++m) orders[d].push_back({f, m});
    for (int m = 0; m < num_microbatches; ++m) orders[d].push_back({b, m});
  }
  return time_device_orders(pp, num_microbatches, orders);
}

Schedule gen_chimera(int num_devices, int num_microbatches, const CostModel& costs) {
  const int d = num_devices;
  if (d % 2 != 0 || num_microbatches % 2 != 0 || num_microbatches < 2)
    throw InvalidArgument("Chimera needs an even device and micro-batch count");
  auto pp = std::make_shared<const PlacementSpec>(
      make_shape(Shape::kXShape, d, costs));
  const PlacementSpec& p = *pp;
  const int unit = d / 2;  // xshape micro-batches per basic unit

  // One basic unit, scheduled greedily: backward first, then the older
  // micro-batch, then the downward pipeline.
  std::vector<BlockInstance> xs;
  for (int m = 0; m < unit; ++m)
    for (int i = 0; i < p.num_stages(); ++i) xs.push_back({i, m});
  const Orders unit_orders = greedy_orders(p, xs, [&](const BlockInstance& a,
                                                      const BlockInstance& b) {
    const bool ab = p.block(a.stage).kind == BlockKind::kBackward;
    const bool bb = p.block(b.stage).kind == BlockKind::kBackward;
    if (ab != bb) return ab;
    if (a.mb != b.mb) return a.mb < b.mb;
    return a.stage < b.stage;
  });

  auto build = [&](int n) {
    Orders orders(d);
    for (int first = 0; first < n; first += unit) {
      for (int dev = 0; dev < d; ++dev)
        for (const BlockInstance& x : unit_orders[dev])
          if (first + x.mb < n) orders[dev].push_back({x.stage, first + x.mb});
    }
    return time_device_orders(pp, n, orders);
  };
  const int n = num_microbatches / 2;
  Schedule s = build(n);
  annotate_steady_state(s, build(reference_size(n, unit) * unit));
  return s;
}

Schedule gen_1f1b_plus(const PlacementSpec& placement, int num_microbatches) {
  if (num_microbatches < 1) throw InvalidArgument("need at least one micro-batch");
  auto pp = std::make_shared<const PlacementSpec>(placement);
  auto build = [&](int n) {
    return time_device_orders(pp, n, chain_1f1b_orders(*pp, n));
  };
  Schedule s = build(num_microbatches);
  annotate_steady_state(
      s, build(reference_size(num_microbatches, placement.num_stages())));
  return s;
}

}  // namespace pipetile
