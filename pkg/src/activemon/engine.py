"""Stream evaluation engine and the semantic oracle.

The engine executes an analyzed specification over timed events. Values are
either concrete or the ABSENT marker; absence propagates strictly through
every expression form except offset accesses, whose defaults apply when the
accessed history is too short.

`verify_model` independently recomputes every output of a finished model and
is the membership oracle every scheduling test checks against.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .analysis import AnalyzedSpec
from .ast import (
    Binary, Const, EvalClause, Expr, MinMax, Now, OffsetAccess, OutputDecl,
    Proj, StreamRef, Unary,
)
from .errors import NonMonotonicTime


class _Absent:
    """Singleton marker for steps where a stream holds no value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _Absent()

_NAN = float("nan")


def _is_nan(v) -> bool:
    return isinstance(v, float) and v != v


def values_equal(a, b) -> bool:
    """Model-cell equality: ABSENT matches ABSENT, NaN matches NaN."""
    if a is ABSENT or b is ABSENT:
        return a is b
    if _is_nan(a) or _is_nan(b):
        return _is_nan(a) and _is_nan(b)
    if isinstance(a, tuple) != isinstance(b, tuple):
        return False
    if isinstance(a, tuple):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    return a == b


@dataclass(frozen=True)
class Event:
    """One timed bundle of input values; only present inputs are listed."""

    time: Fraction
    values: dict[str, object]


@dataclass(frozen=True)
class TriggerReport:
    trigger: str
    step: int
    time: Fraction
    message: Optional[str]


@dataclass
class EvaluationModel:
    """Every stream's value (or ABSENT) at every step plus exact timestamps."""

    times: list[Fraction] = field(default_factory=list)
    streams: dict[str, list[object]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def value(self, stream: str, step: int):
        return self.streams[stream][step]

    def present_inputs(self, input_names, step: int) -> frozenset[str]:
        return frozenset(
            i for i in input_names if self.streams[i][step] is not ABSENT)


@dataclass(frozen=True)
class Violation:
    kind: str  # semantic | schedule | bandwidth
    step: int
    time: object
    detail: str
    stream: Optional[str] = None
    task: Optional[tuple[str, ...]] = None


# ---------------------------------------------------------------------------
# expression evaluation


def _int_div(a: int, b: int) -> int:
    # truncate toward zero, matching 64-bit integer semantics
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def eval_expr(expr: Expr, read: Callable, offset_read: Callable, now: float):
    """Evaluate an expression to a value or ABSENT.

    `read(name)` gives the current-step value of a stream; `offset_read(name,
    k)` gives the k-th previous non-absent value or None when history is too
    short. Division by zero and sqrt of negatives yield NaN so evaluation is
    total over numeric inputs.
    """

    def ev(e: Expr):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Now):
            return now
        if isinstance(e, StreamRef):
            return read(e.name)
        if isinstance(e, OffsetAccess):
            past = offset_read(e.stream, e.offset)
            return ev(e.default) if past is None else past
        if isinstance(e, Proj):
            v = ev(e.operand)
            return v if v is ABSENT else v[e.index]
        if isinstance(e, Unary):
            v = ev(e.operand)
            if v is ABSENT:
                return ABSENT
            if e.op == "neg":
                return -v
            if e.op == "not":
                return not v
            if e.op == "abs":
                return abs(v)
            # sqrt
            if _is_nan(v) or v < 0:
                return _NAN
            return math.sqrt(v)
        if isinstance(e, Binary):
            lv = ev(e.left)
            if lv is ABSENT:
                return ABSENT
            rv = ev(e.right)
            if rv is ABSENT:
                return ABSENT
            op = e.op
            if op == "&&":
                return bool(lv) and bool(rv)
            if op == "||":
                return bool(lv) or bool(rv)
            if op in ("<", "<=", ">", ">="):
                if _is_nan(lv) or _is_nan(rv):
                    return False
                return {"<": lv < rv, "<=": lv <= rv,
                        ">": lv > rv, ">=": lv >= rv}[op]
            if op == "==":
                return values_equal(lv, rv) and not (_is_nan(lv) and _is_nan(rv))
            if op == "!=":
                return not (values_equal(lv, rv) and not (_is_nan(lv) and _is_nan(rv)))
            if op == "+":
                return lv + rv
            if op == "-":
                return lv - rv
            if op == "*":
                return lv * rv
            # division is total: zero divisors yield NaN
            if rv == 0 and not _is_nan(rv):
                return _NAN
            if _is_nan(lv) or _is_nan(rv):
                return _NAN
            if isinstance(lv, int) and isinstance(rv, int) \
                    and not isinstance(lv, bool) and not isinstance(rv, bool):
                return _int_div(lv, rv)
            return lv / rv
        if isinstance(e, MinMax):
            vals = []
            for a in e.args:
                v = ev(a)
                if v is ABSENT:
                    return ABSENT
                vals.append(v)
            if any(_is_nan(v) for v in vals):
                return _NAN
            return min(vals) if e.op == "min" else max(vals)
        raise AssertionError(f"unhandled expression {e!r}")

    return ev(expr)


def eval_clauses(decl: OutputDecl, present: frozenset[str], read, offset_read,
                 now: float):
    """First-match clause evaluation for one output at one step.

    A clause fires when its pacing is satisfied and its when condition holds;
    a when condition that evaluates to ABSENT makes the whole output absent
    for the step, since later clauses assume the earlier conditions were
    decided false.
    """
    for clause in decl.clauses:
        if clause.pacing is None or not clause.pacing.satisfied_by(present):
            continue
        if clause.when is not None:
            w = eval_expr(clause.when, read, offset_read, now)
            if w is ABSENT:
                return ABSENT
            if w is not True:
                continue
        return eval_expr(clause.expr, read, offset_read, now)
    return ABSENT


# ---------------------------------------------------------------------------
# the online monitor


class MonitorState:
    """Single-owner incremental monitor with bounded per-stream history."""

    def __init__(self, analyzed: AnalyzedSpec):
        self.analyzed = analyzed
        self.step = 0
        self.time: Optional[Fraction] = None
        self._inputs = frozenset(analyzed.spec.input_names())
        # history keeps only the non-absent values still reachable by offsets
        self._history: dict[str, deque] = {
            name: deque(maxlen=depth)
            for name, depth in analyzed.max_offset.items() if depth > 0
        }

    def offset_read(self, name: str, k: int):
        h = self._history.get(name)
        if h is None or len(h) < k:
            return None
        return h[-k]

    def _push_history(self, values: dict[str, object]) -> None:
        for name, h in self._history.items():
            v = values[name]
            if v is not ABSENT:
                h.append(v)


def eval_event(state: MonitorState, event: Event):
    """Advance the monitor one step.

    Returns (values, reports): the value or ABSENT of every stream at this
    step, and the triggers that fired. The state is updated in place.
    """
    if state.time is not None and event.time <= state.time:
        raise NonMonotonicTime(
            f"event at {event.time} does not advance past {state.time}")
    if not event.values:
        raise ValueError("an event must carry at least one input value")
    unknown = set(event.values) - state._inputs
    if unknown:
        raise ValueError(f"event values for undeclared inputs: {sorted(unknown)}")

    spec = state.analyzed.spec
    now = float(event.time)
    present = frozenset(event.values)
    current: dict[str, object] = {name: ABSENT for name in spec.stream_names()}
    for name, value in event.values.items():
        current[name] = value

    read = current.__getitem__
    for name in state.analyzed.eval_order:
        current[name] = eval_clauses(
            spec.output_decl(name), present, read, state.offset_read, now)

    reports = []
    for idx, trig in enumerate(spec.triggers):
        v = eval_expr(trig.expr, read, state.offset_read, now)
        if v is True:
            reports.append(TriggerReport(
                state.analyzed.trigger_names[idx], state.step, event.time,
                trig.message))

    state._push_history(current)
    state.step += 1
    state.time = event.time
    return current, reports


def run_monitor(analyzed: AnalyzedSpec, events) -> EvaluationModel:
    """Execute the monitor over a whole trace and materialize the model."""
    model, _ = run_monitor_full(analyzed, events)
    return model


def run_monitor_full(analyzed: AnalyzedSpec, events):
    """Like run_monitor but also returns the trigger reports."""
    state = MonitorState(analyzed)
    names = analyzed.spec.stream_names()
    model = EvaluationModel(streams={name: [] for name in names})
    reports: list[TriggerReport] = []
    for event in events:
        values, fired = eval_event(state, event)
        model.times.append(event.time)
        for name in names:
            model.streams[name].append(values[name])
        reports.extend(fired)
    return model, reports


# ---------------------------------------------------------------------------
# the semantic oracle


class ModelReader:
    """Random access into a finished model, with offset reads by history.

    Offsets address a stream's own non-absent values strictly before a step,
    which this resolves through per-stream indexes of present steps.
    """

    def __init__(self, model: EvaluationModel):
        self.model = model
        self._present: dict[str, list[int]] = {
            name: [t for t, v in enumerate(col) if v is not ABSENT]
            for name, col in model.streams.items()
        }

    def at_step(self, step: int):
        def read(name: str):
            return self.model.streams[name][step]

        def offset_read(name: str, k: int):
            steps = self._present[name]
            pos = bisect_left(steps, step)  # first present index >= step
            if pos < k:
                return None
            return self.model.streams[name][steps[pos - k]]

        return read, offset_read


def verify_model(analyzed: AnalyzedSpec, model: EvaluationModel) -> list[Violation]:
    """Recompute every output at every step; report every disagreement.

    An empty result means the model is a member of the specification's
    semantics: timestamps strictly increase and each output cell equals the
    first-match clause evaluation over the model itself.
    """
    violations: list[Violation] = []
    n = len(model.times)
    for t in range(1, n):
        if model.times[t] <= model.times[t - 1]:
            violations.append(Violation(
                "semantic", t, model.times[t],
                f"time map not strictly increasing: {model.times[t]} after "
                f"{model.times[t - 1]}"))

    spec = analyzed.spec
    input_names = spec.input_names()
    reader = ModelReader(model)
    for t in range(n):
        present = model.present_inputs(input_names, t)
        now = float(model.times[t])
        read, offset_read = reader.at_step(t)
        for name in analyzed.eval_order:
            expected = eval_clauses(
                spec.output_decl(name), present, read, offset_read, now)
            actual = model.streams[name][t]
            if not values_equal(expected, actual):
                violations.append(Violation(
                    "semantic", t, model.times[t],
                    f"stream '{name}' holds {actual!r}, recomputation gives "
                    f"{expected!r}", stream=name))
    return violations


def triggers_from_model(analyzed: AnalyzedSpec, model: EvaluationModel):
    """Evaluate all triggers over a finished model."""
    reports: list[TriggerReport] = []
    reader = ModelReader(model)
    for t in range(len(model.times)):
        read, offset_read = reader.at_step(t)
        now = float(model.times[t])
        for idx, trig in enumerate(analyzed.spec.triggers):
            if eval_expr(trig.expr, read, offset_read, now) is True:
                reports.append(TriggerReport(
                    analyzed.trigger_names[idx], t, model.times[t],
                    trig.message))
    return reports


__all__ = [
    "ABSENT", "Event", "EvaluationModel", "ModelReader", "MonitorState",
    "TriggerReport", "Violation", "eval_clauses", "eval_event", "eval_expr",
    "run_monitor", "run_monitor_full", "triggers_from_model", "values_equal",
    "verify_model",
]
