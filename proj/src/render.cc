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

#include "pipetile/render.h"

#include <algorithm>
#include <map>
#include <sstream>

#include "pipetile/errors.h"

namespace pipetile {

namespace {

BarKind bar_kind(BlockKind k) {
  switch (k) {
    case BlockKind::kForward: return BarKind::kForward;
    case BlockKind::kBackward: return BarKind::kBackward;
    case BlockKind::kOther: return BarKind::kOther;
  }
  return BarKind::kOther;
}

BarKind bar_kind(const std::string& k) {
  if (k == "forward") return BarKind::kForward;
  if (k == "backward") return BarKind::kBackward;
  return BarKind::kOther;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Gantt gantt_from_plan(const Schedule& s) {
  const PlacementSpec& p = s.placement();
  if (!s.complete()) throw ParseError("plan has no entries to render");
  Gantt g;
  g.horizon = s.makespan();
  g.rows.resize(p.num_devices());
  for (int d = 0; d < p.num_devices(); ++d)
    g.rows[d].name = "dev" + std::to_string(d);
  for (const auto& x : s.instances()) {
    const BlockSpec& b = p.block(x.stage);
    for (int d : b.devices)
      g.rows[d].bars.push_back({x.start, x.start + b.time_cost,
                                bar_kind(b.kind), std::to_string(x.mb)});
  }
  for (auto& row : g.rows)
    std::sort(row.bars.begin(), row.bars.end(),
              [](const Bar& a, const Bar& b) { return a.start < b.start; });
  std::ostringstream title;
  title << "N=" << s.num_microbatches() << " D=" << p.num_devices()
        << " makespan=" << g.horizon;
  if (s.repetend) {
    g.window = std::pair{s.repetend->start, s.repetend->end};
    title << " period=" << s.repetend->period << " window=["
          << s.repetend->start << "," << s.repetend->end << ")";
  }
  g.title = title.str();
  return g;
}

Gantt gantt_from_trace(const std::vector<TraceEvent>& trace) {
  if (trace.empty()) throw ParseError("trace has no events to render");
  int devices = 0;
  for (const auto& e : trace) {
    devices = std::max(devices, e.device + 1);
    devices = std::max(devices, e.peer + 1);
  }
  Gantt g;
  std::vector<GanttRow> compute(devices), transfer(devices);
  std::map<std::tuple<int, int, int>, Time> open_exec;
  std::map<std::tuple<int, int, TensorTag>, Time> open_transfer;
  for (const auto& e : trace) {
    g.horizon = std::max(g.horizon, e.t);
    if (e.event == "exec_start") {
      open_exec[{e.device, e.stage, e.mb}] = e.t;
    } else if (e.event == "exec_end") {
      auto it = open_exec.find({e.device, e.stage, e.mb});
      if (it == open_exec.end()) throw ParseError("trace: exec_end without start");
      compute[e.device].bars.push_back(
          {it->second, e.t, bar_kind(e.kind), std::to_string(e.mb)});
      open_exec.erase(it);
    } else if (e.event == "transfer_start") {
      open_transfer[{e.device, e.peer, e.tag}] = e.t;
    } else if (e.event == "transfer_end") {
      auto it = open_transfer.find({e.device, e.peer, e.tag});
      if (it == open_transfer.end())
        throw ParseError("trace: transfer_end without start");
      if (e.t > it->second) {
        const std::string label = std::to_string(e.tag.mb);
        transfer[e.device].bars.push_back(
            {it->second, e.t, BarKind::kTransfer, label});
        if (e.peer >= 0)
          transfer[e.peer].bars.push_back(
              {it->second, e.t, BarKind::kTransfer, label});
      }
      open_transfer.erase(it);
    }
  }
  for (int d = 0; d < devices; ++d) {
    compute[d].name = "dev" + std::to_string(d);
    g.rows.push_back(std::move(compute[d]));
    if (!transfer[d].bars.empty()) {
      transfer[d].name = "dev" + std::to_string(d) + ".xfer";
      g.rows.push_back(std::move(transfer[d]));
    }
  }
  for (auto& row : g.rows)
    std::stable_sort(row.bars.begin(), row.bars.end(),
                     [](const Bar& a, const Bar& b) { return a.start < b.start; });
  g.title = "trace D=" + std::to_string(devices) +
            " makespan=" + std::to_string(g.horizon);
  return g;
}

std::string render_text(const Gantt& g) {
  size_t label = 1;
  size_t name = 4;
  for (const auto& row : g.rows) {
    name = std::max(name, row.name.size());
    for (const auto& b : row.bars) label = std::max(label, b.label.size());
  }
  const size_t w = label + 2;  // columns per time unit
  const size_t width = static_cast<size_t>(g.horizon) * w;
  std::ostringstream os;
  os << "# " << g.title << "\n";

  std::string axis(width, ' ');
  for (Time t = 0; t <= g.horizon; t += 5) {
    const std::string num = std::to_string(t);
    const size_t col = static_cast<size_t>(t) * w;
    if (col + num.size() <= width || t == 0) {
      if (axis.size() < col + num.size()) axis.resize(col + num.size(), ' ');
      axis.replace(col, num.size(), num);
    }
  }
  os << std::string(name, ' ') << " |" << axis << "\n";

  for (const auto& row : g.rows) {
    std::string line(width, '.');
    for (const auto& b : row.bars) {
      const size_t from = static_cast<size_t>(b.start) * w;
      const size_t len = static_cast<size_t>(b.end - b.start) * w;
      if (len < 2) continue;
      char open = '(', close = ')', fill = ' ';
      switch (b.kind) {
        case BarKind::kForward: open = '['; close = ']'; break;
        case BarKind::kBackward: open = '{'; close = '}'; fill = '='; break;
        case BarKind::kTransfer: open = '<'; close = '>'; fill = '~'; break;
        case BarKind::kOther: break;
      }
      std::string cell(len, fill);
      cell.front() = open;
      cell.back() = close;
      cell.replace(1, std::min(b.label.size(), len - 2), b.label, 0, len - 2);
      line.replace(from, len, cell);
    }
    os << row.name << std::string(name - row.name.size(), ' ') << " |" << line
       << "|\n";
  }

  if (g.window) {
    const auto [lo, hi] = *g.window;
    std::string marks(width, ' ');
    const size_t a = static_cast<size_t>(lo) * w;
    const size_t b = std::min(width, static_cast<size_t>(hi) * w);
    for (size_t c = a; c < b; ++c) marks[c] = '-';
    if (a < width) marks[a] = '^';
    if (b > a) marks[b - 1] = '^';
    os << "rep" << std::string(name - 3, ' ') << " |" << marks << "\n";
  }
  return os.str();
}

std::string render_svg(const Gantt& g) {
  const int unit = 24, row_h = 26, left = 90, top = 36;
  const int width = left + static_cast<int>(g.horizon) * unit + 20;
  const int height = top + static_cast<int>(g.rows.size()) * row_h + 30;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" font-family=\"monospace\" "
     << "font-size=\"11\">\n";
  os << "<text x=\"4\" y=\"14\">" << escape(g.title) << "</text>\n";
  for (Time t = 0; t <= g.horizon; t += 5) {
    const int x = left + static_cast<int>(t) * unit;
    os << "<text x=\"" << x << "\" y=\"" << top - 6 << "\">" << t
       << "</text>\n";
  }
  for (size_t r = 0; r < g.rows.size(); ++r) {
    const int y = top + static_cast<int>(r) * row_h;
    os << "<text x=\"4\" y=\"" << y + 16 << "\">" << escape(g.rows[r].name)
       << "</text>\n";
    for (const auto& b : g.rows[r].bars) {
      const char* fill = "#ffffff";
      const char* cls = "other";
      switch (b.kind) {
        case BarKind::kForward: fill = "#ffffff"; cls = "forward"; break;
        case BarKind::kBackward: fill = "#7fa7d9"; cls = "backward"; break;
        case BarKind::kOther: fill = "#f2c46d"; cls = "other"; break;
        case BarKind::kTransfer: fill = "#9fd49b"; cls = "transfer"; break;
      }
      const int x = left + static_cast<int>(b.start) * unit;
      const int bw = static_cast<int>(b.end - b.start) * unit;
      os << "<rect class=\"" << cls << "\" x=\"" << x << "\" y=\"" << y
         << "\" width=\"" << bw << "\" height=\"" << row_h - 4
         << "\" fill=\"" << fill << "\" stroke=\"#333333\"/>\n";
      os << "<text x=\"" << x + 4 << "\" y=\"" << y + 15 << "\">"
         << escape(b.label) << "</text>\n";
    }
  }
  if (g.window) {
    const int bottom = top + static_cast<int>(g.rows.size()) * row_h;
    for (Time t : {g.window->first, g.window->second}) {
      const int x = left + static_cast<int>(t) * unit;
      os << "<line class=\"repetend\" x1=\"" << x << "\" y1=\"" << top - 4
         << "\" x2=\"" << x << "\" y2=\"" << bottom + 4
         << "\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\"/>\n";
    }
    os << "<text x=\"" << left + static_cast<int>(g.window->first) * unit
       << "\" y=\"" << bottom + 18 << "\" fill=\"#c0392b\">repetend</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace pipetile
