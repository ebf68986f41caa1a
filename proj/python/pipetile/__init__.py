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

"""Repetend-based pipeline schedule search.

Plans, placements and device programs are plain dicts in the same layout as
the JSON files the command-line tool reads and writes.
"""

from ._core import (
    Error,
    InfeasibleError,
    InvalidArgument,
    MalformedProgram,
    MissingAnnotation,
    ParseError,
    SearchTimeout,
    UnsupportedPlacement,
    UnsupportedShape,
    ValidationError,
    baseline,
    emit,
    extend,
    metrics,
    placement,
    render,
    search,
    search_time_optimal,
    simulate,
    validate,
)

__all__ = [
    "Error",
    "InfeasibleError",
    "InvalidArgument",
    "MalformedProgram",
    "MissingAnnotation",
    "ParseError",
    "SearchTimeout",
    "UnsupportedPlacement",
    "UnsupportedShape",
    "ValidationError",
    "baseline",
    "emit",
    "extend",
    "metrics",
    "placement",
    "render",
    "search",
    "search_time_optimal",
    "simulate",
    "validate",
]
