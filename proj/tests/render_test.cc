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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "pipetile/baselines.h"
#include "pipetile/errors.h"
#include "pipetile/render.h"

using namespace pipetile;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(PIPETILE_TEST_DATA) + "/" + name);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

const Schedule& one_f_one_b() {
  static const Schedule s = gen_1f1b(4, 6, CostModel::Plain());
  return s;
}

}  // namespace

TEST_CASE("1F1B text chart") {
  const std::string text = render_text(gantt_from_plan(one_f_one_b()));
  CHECK(text == golden("golden_1f1b_plan.txt"));
  const auto ls = lines(text);
  REQUIRE(ls.size() == 7);
  // Device 3 alternates one forward and one backward from its first block.
  CHECK(ls[5].find("[0]{0===}[1]{1===}[2]{2===}") != std::string::npos);
  // Repetend markers sit under the annotated window.
  REQUIRE(one_f_one_b().repetend);
  const size_t col = ls[6].find('^');
  CHECK(col == ls[6].find('|') + 1 + one_f_one_b().repetend->start * 3);
  CHECK(ls[6].rfind('^') > col);
}

TEST_CASE("non-blocking trace chart has transfer rows") {
  SimConfig cfg;
  cfg.comm_cost = 1;
  cfg.trace = true;
  const SimReport r =
      simulate(emit(one_f_one_b(), CommMode::kNonBlocking), cfg);
  const std::string text = render_text(gantt_from_trace(r.trace));
  CHECK(text == golden("golden_1f1b_trace.txt"));
  CHECK(text.find("dev0.xfer") != std::string::npos);
  CHECK(text.find("dev3.xfer") != std::string::npos);
}

TEST_CASE("zero-cost transfers draw no transfer rows") {
  SimConfig cfg;
  cfg.trace = true;
  const SimReport r = simulate(emit(one_f_one_b()), cfg);
  const Gantt g = gantt_from_trace(r.trace);
  CHECK(g.rows.size() == 4);
  CHECK(render_text(g) == [&] {
    Gantt plan = gantt_from_plan(one_f_one_b());
    plan.window.reset();
    plan.title = g.title;
    return render_text(plan);
  }());
}

TEST_CASE("svg chart") {
  const std::string svg = render_svg(gantt_from_plan(one_f_one_b()));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("class=\"forward\"") != std::string::npos);
  CHECK(svg.find("class=\"backward\"") != std::string::npos);
  CHECK(svg.find("class=\"repetend\"") != std::string::npos);
  size_t rects = 0;
  for (size_t at = svg.find("<rect"); at != std::string::npos;
       at = svg.find("<rect", at + 1))
    ++rects;
  CHECK(rects == 48);
  CHECK(render_svg(gantt_from_plan(one_f_one_b())) == svg);
}

TEST_CASE("empty inputs") {
  Schedule empty(one_f_one_b().placement_ptr(), 1);
  CHECK_THROWS_AS(gantt_from_plan(empty), ParseError);
  CHECK_THROWS_AS(gantt_from_trace({}), ParseError);
}

TEST_CASE("multi-device blocks appear on every device") {
  const PlacementSpec p = make_shape(Shape::kMShape, 4);
  const Schedule s = gen_1f1b_plus(p, 4);
  const Gantt g = gantt_from_plan(s);
  Time busy0 = 0;
  for (const auto& b : g.rows[0].bars) busy0 += b.end - b.start;
  CHECK(busy0 == compute_metrics(s).per_device_busy[0]);
}
