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

// Python module `pipetile._core`. Plans, placements and programs cross the
// boundary as the same dicts the JSON files hold.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "json.hpp"
#include "pipetile/baselines.h"
#include "pipetile/completion.h"
#include "pipetile/errors.h"
#include "pipetile/extension.h"
#include "pipetile/program.h"
#include "pipetile/render.h"
#include "pipetile/simulator.h"
#include "pipetile/to_search.h"

namespace py = pybind11;
using nlohmann::json;
using namespace pipetile;

namespace {

json to_json(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

// Strings are file paths or shape pseudo-paths; dicts are inline placements.
PlacementSpec placement_arg(const py::handle& obj) {
  if (py::isinstance<py::str>(obj)) return resolve_placement(obj.cast<std::string>());
  return placement_from_json(to_json(obj));
}

Schedule plan_arg(const py::handle& obj) {
  if (py::isinstance<py::str>(obj)) return load_plan(obj.cast<std::string>());
  return schedule_from_json(to_json(obj));
}

double budget_arg(std::optional<double> budget) {
  return budget ? *budget : budget_seconds_from_env();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Repetend-based pipeline schedule search";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", error);
  py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<UnsupportedShape>(m, "UnsupportedShape", error);
  py::register_exception<UnsupportedPlacement>(m, "UnsupportedPlacement", error);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", error);
  py::register_exception<TimeoutError>(m, "SearchTimeout", error);
  py::register_exception<MissingAnnotation>(m, "MissingAnnotation", error);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error);
  py::register_exception<MalformedProgram>(m, "MalformedProgram", error);

  m.def(
      "placement",
      [](const py::object& p, std::optional<Mem> memory) {
        PlacementSpec spec = placement_arg(p);
        if (memory) spec = spec.with_memory(*memory);
        return to_py(placement_to_json(spec));
      },
      py::arg("placement"), py::arg("memory") = py::none(),
      "Placement dict for a path, pseudo-path or dict.");

  m.def(
      "search",
      [](const py::object& p, std::optional<Mem> memory, int max_nr,
         std::optional<double> budget, int jobs, bool lazy) {
        PlacementSpec spec = placement_arg(p);
        if (memory) spec = spec.with_memory(*memory);
        SearchOptions opts;
        opts.max_nr = max_nr;
        opts.budget_seconds = budget_arg(budget);
        opts.jobs = jobs;
        opts.lazy = lazy;
        std::optional<SearchResult> res;
        {
          py::gil_scoped_release release;
          res.emplace(search(spec, opts));
        }
        return py::make_tuple(to_py(schedule_to_json(res->schedule)),
                              to_py(report_to_json(res->report)));
      },
      py::arg("placement"), py::arg("memory") = py::none(),
      py::arg("max_nr") = SearchOptions{}.max_nr,
      py::arg("budget") = py::none(), py::arg("jobs") = 1,
      py::arg("lazy") = true, "Two-phase search; returns (plan, report).");

  m.def(
      "search_time_optimal",
      [](const py::object& p, int n, std::optional<double> budget) {
        const PlacementSpec spec = placement_arg(p);
        std::optional<TimeOptimalResult> res;
        {
          py::gil_scoped_release release;
          res.emplace(search_time_optimal(spec, n, budget_arg(budget)));
        }
        json j = schedule_to_json(res->schedule);
        j["solver"] = {{"status", to_string(res->status)},
                       {"lower_bound", res->lower_bound},
                       {"nodes", res->stats.nodes}};
        return to_py(j);
      },
      py::arg("placement"), py::arg("n"), py::arg("budget") = py::none());

  m.def(
      "extend",
      [](const py::object& plan, int n) {
        return to_py(schedule_to_json(extend(plan_arg(plan), n)));
      },
      py::arg("plan"), py::arg("n"));

  m.def(
      "validate",
      [](const py::object& plan) {
        std::vector<std::string> out;
        for (const auto& v : validate_schedule(plan_arg(plan)))
          out.push_back(v.message);
        return out;
      },
      py::arg("plan"), "Violation messages; empty when the plan is valid.");

  m.def(
      "metrics",
      [](const py::object& plan) {
        const auto mt = compute_metrics(plan_arg(plan));
        py::dict d;
        d["makespan"] = mt.makespan;
        d["per_device_busy"] = mt.per_device_busy;
        d["peak_memory"] = mt.peak_memory;
        d["bubble_rate_total"] = mt.bubble_rate_total.to_double();
        d["bubble_rate_steady"] =
            mt.bubble_rate_steady
                ? py::object(py::float_(mt.bubble_rate_steady->to_double()))
                : py::object(py::none());
        return d;
      },
      py::arg("plan"));

  m.def(
      "baseline",
      [](const std::string& kind, int n, int devices, Time fwd, Time bwd,
         const py::object& placement) {
        const CostModel c{fwd, bwd, 1, -1};
        const Schedule s = [&]() {
          if (kind == "1f1b") return gen_1f1b(devices, n, c);
          if (kind == "gpipe") return gen_gpipe(devices, n, c);
          if (kind == "chimera") return gen_chimera(devices, n, c);
          if (kind != "1f1b-plus")
            throw InvalidArgument("unknown baseline '" + kind + "'");
          if (placement.is_none())
            throw InvalidArgument("1f1b-plus needs a placement");
          return gen_1f1b_plus(placement_arg(placement), n);
        }();
        return to_py(schedule_to_json(s));
      },
      py::arg("kind"), py::arg("n"), py::arg("devices") = 4,
      py::arg("forward") = 1, py::arg("backward") = 3,
      py::arg("placement") = py::none());

  m.def(
      "emit",
      [](const py::object& plan, const std::string& mode) {
        return to_py(
            programs_to_json(emit(plan_arg(plan), comm_mode_from_string(mode))));
      },
      py::arg("plan"), py::arg("mode") = "blocking");

  m.def(
      "simulate",
      [](const py::object& programs, Time comm_cost, bool trace) {
        const DevicePrograms progs = programs_from_json(to_json(programs));
        SimConfig cfg;
        cfg.comm_cost = comm_cost;
        cfg.trace = trace;
        const SimReport r = simulate(progs, cfg);
        py::dict d;
        d["makespan"] = r.makespan;
        d["busy"] = r.busy;
        d["idle"] = r.idle;
        d["wait"] = r.wait;
        d["peak_memory"] = r.peak_memory;
        d["deadlock"] = r.deadlock;
        d["blocked_state"] = r.blocked_state;
        py::list events;
        for (const auto& e : r.trace) events.append(to_py(trace_event_to_json(e)));
        d["trace"] = events;
        return d;
      },
      py::arg("programs"), py::arg("comm_cost") = 0, py::arg("trace") = false);

  m.def(
      "render",
      [](const py::object& plan, const std::string& format) {
        const Gantt g = gantt_from_plan(plan_arg(plan));
        if (format == "text") return render_text(g);
        if (format == "svg") return render_svg(g);
        throw InvalidArgument("format must be text or svg");
      },
      py::arg("plan"), py::arg("format") = "text");
}
