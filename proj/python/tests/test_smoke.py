# Copyright 2026 The pipetile Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json

import pytest

import pipetile as pt


@pytest.fixture(scope="module")
def vshape_plan():
    plan, report = pt.search("shape:vshape:4:1/2", budget=120)
    assert not report["timed_out"]
    return plan


def test_placement_from_pseudo_path():
    p = pt.placement("shape:vshape:4", memory=5)
    assert p["devices"] == 4
    assert p["memory"] == 5
    assert len(p["blocks"]) == 8


def test_search_reaches_zero_steady_bubble(vshape_plan):
    assert pt.validate(vshape_plan) == []
    m = pt.metrics(vshape_plan)
    assert m["bubble_rate_steady"] == 0.0
    assert m["makespan"] == 21


def test_plan_round_trips_through_json(vshape_plan):
    again = json.loads(json.dumps(vshape_plan))
    assert pt.metrics(again) == pt.metrics(vshape_plan)


def test_extend_then_simulate_matches_plan(vshape_plan):
    plan = pt.extend(vshape_plan, 8)
    assert pt.validate(plan) == []
    r = pt.simulate(pt.emit(plan, "nonblocking"))
    assert not r["deadlock"]
    assert r["makespan"] == pt.metrics(plan)["makespan"]


def test_trace_events():
    plan = pt.baseline("1f1b", 4, devices=2)
    r = pt.simulate(pt.emit(plan), comm_cost=1, trace=True)
    kinds = {e["event"] for e in r["trace"]}
    assert {"exec_start", "exec_end"} <= kinds


def test_time_optimal_small():
    plan = pt.search_time_optimal("shape:vshape:2:1/2", 2, budget=60)
    assert plan["solver"]["status"] == "optimal"
    # Device 1 holds 6 units of work from t=1; the last backward adds 2.
    assert pt.metrics(plan)["makespan"] == 9


def test_render_text(vshape_plan):
    text = pt.render(vshape_plan)
    assert text.startswith("# ")
    assert "svg" in pt.render(vshape_plan, "svg")


def test_errors_map_to_exceptions():
    with pytest.raises(pt.InfeasibleError):
        pt.search("shape:mshape:4", memory=1, budget=30)
    with pytest.raises(pt.SearchTimeout):
        pt.search("shape:vshape:4", budget=0)
    with pytest.raises(pt.UnsupportedShape):
        pt.placement("shape:zshape:4")
    with pytest.raises(pt.Error):
        pt.baseline("1f1b-plus", 8)
