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

// Command-line front end. Exit codes: 0 success, 1 other errors, 2 rejected
// input (parse, validation, unsupported shape), 3 infeasible, 4 timeout.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pipetile/baselines.h"
#include "pipetile/completion.h"
#include "pipetile/errors.h"
#include "pipetile/extension.h"
#include "pipetile/program.h"
#include "pipetile/render.h"
#include "pipetile/simulator.h"
#include "pipetile/to_search.h"

namespace {

using namespace pipetile;
using nlohmann::json;

constexpr int kExitOther = 1;
constexpr int kExitParse = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitTimeout = 4;

double default_budget() {
  const char* env = std::getenv("TESSEL_BUDGET_SECS");
  if (!env || !*env) return kDefaultBudgetSeconds;
  try {
    size_t used = 0;
    const double v = std::stod(env, &used);
    if (used != std::string(env).size() || v < 0) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("TESSEL_BUDGET_SECS is not a number: ") + env);
  }
}

void write_text(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw Error("cannot write '" + out + "'");
  f << text;
}

void write_json(const json& j, const std::string& out) {
  write_text(j.dump(2) + "\n", out);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

std::string dir_of(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return slash == std::string::npos ? "" : path.substr(0, slash);
}

Schedule read_plan(const std::string& path) {
  return schedule_from_json(parse_json(read_file(path), path), dir_of(path));
}

PlacementSpec read_placement(const std::string& path, std::optional<Mem> memory) {
  PlacementSpec p = resolve_placement(path);
  return memory ? p.with_memory(*memory) : p;
}

std::string rate(const Rational& r) {
  std::ostringstream os;
  os << r.to_double();
  return os.str();
}

void summarize(const Schedule& s) {
  const auto m = compute_metrics(s);
  std::cerr << "makespan " << m.makespan << ", total bubble "
            << m.bubble_rate_total.to_string();
  if (s.repetend) {
    std::cerr << ", period " << s.repetend->period << ", steady bubble "
              << m.bubble_rate_steady->to_string();
  }
  std::cerr << "\n";
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) throw std::invalid_argument("");
    const int a = std::stoi(s.substr(0, dots));
    const int b = std::stoi(s.substr(dots + 2));
    if (a > b || a < 1) throw std::invalid_argument("");
    return {a, b};
  } catch (const std::exception&) {
    throw ParseError("range must look like a..b with 1 <= a <= b, got '" + s +
                     "'");
  }
}

CostModel parse_costs(const std::string& s) {
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos) throw std::invalid_argument("");
    CostModel c;
    c.forward = std::stoll(s.substr(0, slash));
    c.backward = std::stoll(s.substr(slash + 1));
    if (c.forward < 1 || c.backward < 1) throw std::invalid_argument("");
    return c;
  } catch (const std::exception&) {
    throw ParseError("costs must look like 1/3, got '" + s + "'");
  }
}

struct Common {
  std::string out;
  std::optional<double> budget;
  std::optional<Mem> memory;
  double budget_or_default() const {
    return budget ? *budget : default_budget();
  }
};

void add_common(CLI::App* cmd, Common& c, bool solver) {
  cmd->add_option("--out,-o", c.out, "Output file (default: stdout)");
  if (solver) {
    cmd->add_option("--budget", c.budget,
                    "Solver budget in seconds (default: TESSEL_BUDGET_SECS or " +
                        std::to_string(static_cast<int>(kDefaultBudgetSeconds)) +
                        ")")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--memory", c.memory, "Per-device memory capacity")
        ->check(CLI::PositiveNumber);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repetend-based pipeline schedule search"};
  app.name("pipetile");
  app.require_subcommand(1);
  int seed = 0;
  app.add_option("--seed", seed, "Seed for randomized inputs (default 0)");

  // search
  Common search_c;
  std::string search_in, search_report;
  int max_nr = SearchOptions{}.max_nr;
  int jobs = 1;
  bool eager = false;
  auto* search_cmd = app.add_subcommand("search", "Two-phase repetend search");
  search_cmd->add_option("placement", search_in,
                         "Placement JSON or shape:<name>:<D>[:<f>/<b>]")
      ->required();
  add_common(search_cmd, search_c, true);
  search_cmd->add_option("--max-nr", max_nr, "Largest repetend micro-batch count")
      ->check(CLI::PositiveNumber);
  search_cmd->add_option("--jobs", jobs, "Parallel candidate solves")
      ->check(CLI::PositiveNumber);
  search_cmd->add_flag("--eager", eager,
                       "Complete every improving candidate right away");
  search_cmd->add_option("--report", search_report, "Search report JSON file");

  // to-search
  Common to_c;
  std::string to_in, to_backend = "disjunctive";
  int to_n = 0;
  auto* to_cmd = app.add_subcommand("to-search", "Time-optimal search over all micro-batches");
  to_cmd->add_option("placement", to_in)->required();
  to_cmd->add_option("--n", to_n, "Micro-batch count")->required()->check(
      CLI::PositiveNumber);
  to_cmd->add_option("--backend", to_backend, "event, difference or disjunctive");
  add_common(to_cmd, to_c, true);

  // extend
  Common ext_c;
  std::string ext_in;
  int ext_n = 0;
  auto* ext_cmd = app.add_subcommand("extend", "Repeat a plan's repetend to N micro-batches");
  ext_cmd->add_option("plan", ext_in)->required();
  ext_cmd->add_option("--n", ext_n)->required()->check(CLI::PositiveNumber);
  add_common(ext_cmd, ext_c, false);

  // emit
  Common emit_c;
  std::string emit_in, emit_mode = "blocking";
  auto* emit_cmd = app.add_subcommand("emit", "Lower a plan to per-device programs");
  emit_cmd->add_option("plan", emit_in)->required();
  emit_cmd->add_option("--mode", emit_mode, "blocking or nonblocking");
  add_common(emit_cmd, emit_c, false);

  // simulate
  Common sim_c;
  std::string sim_in, sim_mode = "blocking", sim_trace;
  Time comm_cost = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Run programs (or a plan) in the event simulator");
  sim_cmd->add_option("input", sim_in, "Programs JSON or plan JSON")->required();
  sim_cmd->add_option("--mode", sim_mode, "Lowering mode when the input is a plan");
  sim_cmd->add_option("--comm-cost", comm_cost, "Time per transfer")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--trace", sim_trace, "Write a JSON-lines event trace");
  add_common(sim_cmd, sim_c, false);

  // baseline
  Common base_c;
  std::string kind, costs = "1/3", base_placement;
  int devices = 4, base_n = 0;
  auto* base_cmd = app.add_subcommand("baseline", "Generate a reference schedule");
  base_cmd->add_option("--kind", kind)
      ->required()
      ->check(CLI::IsMember({"1f1b", "gpipe", "chimera", "1f1b-plus"}));
  base_cmd->add_option("--n", base_n, "Micro-batch count")->required()->check(
      CLI::PositiveNumber);
  base_cmd->add_option("--devices", devices)->check(CLI::PositiveNumber);
  base_cmd->add_option("--costs", costs, "Forward/backward cost, e.g. 1/3");
  base_cmd->add_option("--placement", base_placement,
                       "Placement for 1f1b-plus (default shape:mshape:<devices>)");
  add_common(base_cmd, base_c, false);

  // ablate
  Common abl_c;
  std::string abl_in, sweep, range;
  auto* abl_cmd = app.add_subcommand("ablate", "Sweep N_R or memory and report steady bubble rates as CSV");
  abl_cmd->add_option("placement", abl_in)->required();
  abl_cmd->add_option("--sweep", sweep)->required()->check(
      CLI::IsMember({"nr", "memory"}));
  abl_cmd->add_option("--range", range, "a..b")->required();
  abl_cmd->add_option("--max-nr", max_nr, "N_R cap for memory sweeps");
  add_common(abl_cmd, abl_c, true);

  // render
  Common ren_c;
  std::string ren_in, format = "text";
  auto* ren_cmd = app.add_subcommand("render", "Draw a plan or a simulator trace as a Gantt chart");
  ren_cmd->add_option("input", ren_in, "Plan JSON or JSON-lines trace")->required();
  ren_cmd->add_option("--format", format)->check(CLI::IsMember({"text", "svg"}));
  add_common(ren_cmd, ren_c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitParse;
  }

  try {
    if (*search_cmd) {
      SearchOptions opts;
      opts.max_nr = max_nr;
      opts.jobs = jobs;
      opts.lazy = !eager;
      opts.budget_seconds = search_c.budget_or_default();
      const PlacementSpec p = read_placement(search_in, search_c.memory);
      try {
        const SearchResult res = search(p, opts);
        const std::string ref = search_in.starts_with("shape:") ? search_in : "";
        write_json(schedule_to_json(res.schedule, ref), search_c.out);
        if (!search_report.empty()) {
          json rep = report_to_json(res.report);
          rep["seed"] = seed;
          write_json(rep, search_report);
        }
        summarize(res.schedule);
        if (res.report.timed_out)
          std::cerr << "some candidates ran out of budget\n";
      } catch (const TimeoutError&) {
        write_json({{"status", "timeout"}, {"best", nullptr}}, search_c.out);
        throw;
      }
    } else if (*to_cmd) {
      const PlacementSpec p = read_placement(to_in, to_c.memory);
      const auto backend = make_backend(backend_from_string(to_backend));
      const auto res =
          search_time_optimal(p, to_n, to_c.budget_or_default(), *backend);
      json j = schedule_to_json(res.schedule,
                                to_in.starts_with("shape:") ? to_in : "");
      j["solver"] = {{"status", to_string(res.status)},
                     {"lower_bound", res.lower_bound},
                     {"nodes", res.stats.nodes},
                     {"wall_seconds", res.stats.wall_seconds}};
      write_json(j, to_c.out);
      summarize(res.schedule);
      if (res.status == SolveStatus::kTimeout) {
        std::cerr << "budget exhausted; plan is the best found\n";
        return kExitTimeout;
      }
    } else if (*ext_cmd) {
      const Schedule s = extend(read_plan(ext_in), ext_n);
      write_json(schedule_to_json(s), ext_c.out);
      summarize(s);
    } else if (*emit_cmd) {
      const Schedule s = read_plan(emit_in);
      if (auto v = validate_schedule(s); !v.empty())
        throw ValidationError("plan is invalid: " + v.front().message);
      write_json(programs_to_json(emit(s, comm_mode_from_string(emit_mode))),
                 emit_c.out);
    } else if (*sim_cmd) {
      const json j = parse_json(read_file(sim_in), sim_in);
      DevicePrograms progs;
      if (j.contains("entries")) {
        const Schedule s = schedule_from_json(j, dir_of(sim_in));
        progs = emit(s, comm_mode_from_string(sim_mode));
      } else {
        progs = programs_from_json(j);
      }
      SimConfig cfg;
      cfg.comm_cost = comm_cost;
      cfg.trace = !sim_trace.empty();
      const SimReport r = simulate(progs, cfg);
      write_json({{"makespan", r.makespan},
                  {"busy", r.busy},
                  {"idle", r.idle},
                  {"wait", r.wait},
                  {"peak_memory", r.peak_memory},
                  {"deadlock", r.deadlock},
                  {"blocked_state", r.blocked_state}},
                 sim_c.out);
      if (cfg.trace) {
        std::string lines;
        for (const auto& e : r.trace) lines += trace_event_to_json(e).dump() + "\n";
        write_text(lines, sim_trace);
      }
      if (r.deadlock) std::cerr << "deadlock\n" << r.blocked_state;
    } else if (*base_cmd) {
      const CostModel c = parse_costs(costs);
      Schedule s = [&]() {
        if (kind == "1f1b") return gen_1f1b(devices, base_n, c);
        if (kind == "gpipe") return gen_gpipe(devices, base_n, c);
        if (kind == "chimera") return gen_chimera(devices, base_n, c);
        const std::string path =
            base_placement.empty()
                ? "shape:mshape:" + std::to_string(devices) + ":" + costs
                : base_placement;
        return gen_1f1b_plus(resolve_placement(path), base_n);
      }();
      write_json(schedule_to_json(s), base_c.out);
      summarize(s);
    } else if (*abl_cmd) {
      const auto [lo, hi] = parse_range(range);
      const PlacementSpec base = read_placement(abl_in, abl_c.memory);
      std::ostringstream csv;
      csv << sweep << ",steady_bubble_rate\n";
      for (int v = lo; v <= hi; ++v) {
        SearchOptions opts;
        opts.budget_seconds = abl_c.budget_or_default();
        opts.max_nr = sweep == "nr" ? v : max_nr;
        const PlacementSpec p = sweep == "memory" ? base.with_memory(v) : base;
        csv << v << ",";
        try {
          csv << rate(steady_bubble_rate(search(p, opts).schedule)) << "\n";
        } catch (const InfeasibleError&) {
          csv << "infeasible\n";
        } catch (const TimeoutError&) {
          csv << "timeout\n";
        }
      }
      write_text(csv.str(), abl_c.out);
    } else if (*ren_cmd) {
      const std::string text = read_file(ren_in);
      if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ParseError("'" + ren_in + "' is empty");
      Gantt g;
      json whole;
      bool single = true;
      try {
        whole = json::parse(text);
      } catch (const json::exception&) {
        single = false;
      }
      if (single && whole.is_object() && !whole.contains("event")) {
        if (!whole.contains("entries") || whole.at("entries").empty())
          throw ParseError("'" + ren_in + "' has no plan entries");
        g = gantt_from_plan(schedule_from_json(whole, dir_of(ren_in)));
      } else {
        std::vector<TraceEvent> trace;
        std::istringstream is(text);
        for (std::string line; std::getline(is, line);) {
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          trace.push_back(trace_event_from_json(parse_json(line, ren_in)));
        }
        g = gantt_from_trace(trace);
      }
      write_text(format == "svg" ? render_svg(g) : render_text(g), ren_c.out);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitParse;
  } catch (const UnsupportedShape& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitParse;
  } catch (const UnsupportedPlacement& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitParse;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitParse;
  } catch (const MalformedProgram& e) {
    std::cerr << "malformed program: " << e.what() << "\n";
    return kExitParse;
  } catch (const MissingAnnotation& e) {
    std::cerr << "missing annotation: " << e.what() << "\n";
    return kExitParse;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const TimeoutError& e) {
    std::cerr << "timeout: " << e.what() << "\n";
    return kExitTimeout;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return 0;
}
