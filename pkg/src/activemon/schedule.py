"""Static scheduling tables and the per-step obligation oracle.

Turns the annotations of an analyzed specification into a per-task table
of (condition, value) regions, and answers, for a finished run, which
tasks the scheduler was obliged to satisfy at each step.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .analysis import AnalyzedSpec, AnnEntry
from .ast import TRUE, Expr, Pacing, conjoin, format_expr
from .engine import (
    ABSENT,
    EvaluationModel,
    ModelReader,
    Violation,
    eval_expr,
    verify_model,
)
from .errors import MixedAnnotationKinds, PreconditionViolation

# a task is a nonempty set of input streams queried together
Task = frozenset

MODE_DEADLINE = "deadline"
MODE_PRIORITY = "priority"
MODE_DP = "dp"
MODES = (MODE_DEADLINE, MODE_PRIORITY, MODE_DP)


def task_key(task: Task) -> tuple:
    """Deterministic sort key; shorter tasks precede their supersets."""
    return tuple(sorted(task))


def format_task(task: Task) -> str:
    return "{" + ",".join(sorted(task)) + "}"


@dataclass(frozen=True)
class ScheduleEntry:
    """One region of a task's schedule table.

    ``condition`` holds under ``pacing``; while it is the most recently
    satisfied region, ``value`` is the task's current priority (int) or
    deadline (Fraction seconds).  ``sources`` names the contributing
    (stream, clause index) pairs, clause index -1 for input annotations.
    """

    condition: Expr
    pacing: Pacing
    value: object
    sources: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class StaticSchedule:
    mode: str
    universe: frozenset
    direct: tuple  # direct tasks, declaration order
    entries: dict  # Task -> tuple[ScheduleEntry, ...], most restrictive first
    bounds: dict  # Task -> Optional[Fraction], per-task staleness deadline
    tracked: frozenset  # direct tasks whose last satisfaction is observable
    joint: dict  # Task -> frozenset[Task], direct tasks covering its regions

    def restrictive(self) -> Callable[[list], object]:
        """Combine same-step region values to the most restrictive one."""
        return min if self.mode == MODE_DEADLINE else max


def union_closure(base: set) -> frozenset:
    tasks = {t for t in base if t}
    grew = True
    while grew:
        grew = False
        for a, b in itertools.combinations(list(tasks), 2):
            u = a | b
            if u not in tasks:
                tasks.add(u)
                grew = True
    return frozenset(tasks)


def build_task_universe(analyzed: AnalyzedSpec) -> frozenset:
    """Union closure of clause pacings and annotated-input singletons."""
    base: set = set()
    for out in analyzed.spec.outputs:
        for clause in out.clauses:
            if clause.pacing is not None and not clause.pacing.is_any:
                base.add(frozenset(clause.pacing.inputs))
    for inp in analyzed.spec.inputs:
        if inp.annotation is not None and not inp.annotation.is_empty():
            base.add(frozenset({inp.name}))
    return union_closure(base)


def _stream_order(analyzed: AnalyzedSpec) -> list:
    return [i.name for i in analyzed.spec.inputs] + [
        o.name for o in analyzed.spec.outputs
    ]


def build_static_schedule(
    analyzed: AnalyzedSpec,
    mode: str,
    default_deadline: Optional[Fraction] = None,
) -> StaticSchedule:
    """Derive the per-task region table for one scheduling mode.

    Deadline mode consumes deadline annotations and rejects priorities;
    the priority-based modes consume priorities, allow deadlines on
    inputs (staleness bounds) and reject them on output clauses.
    """
    if mode not in MODES:
        raise ValueError(f"unknown scheduling mode '{mode}'")
    if default_deadline is None:
        default_deadline = analyzed.config.default_deadline

    ann = analyzed.annotations
    for name, chain in ann.items():
        for entry in chain:
            if entry.pacing.is_any:
                raise PreconditionViolation(
                    f"'{name}' carries an annotation on an any-paced clause; "
                    "tasks must pace on concrete inputs")

    if mode == MODE_DEADLINE:
        for name, chain in ann.items():
            for entry in chain:
                if entry.priority is not None:
                    raise MixedAnnotationKinds(
                        f"'{name}' has a priority annotation; deadline mode "
                        "accepts only deadline annotations")
    else:
        for name, chain in ann.items():
            for entry in chain:
                if entry.clause_index >= 0 and entry.deadline is not None:
                    raise MixedAnnotationKinds(
                        f"'{name}' puts a deadline on an output clause; "
                        "priority-based modes take deadlines on inputs only")

    # region values for this mode, per stream
    chains: dict = {}
    for name in _stream_order(analyzed):
        chain = ann.get(name)
        if not chain:
            continue
        if mode == MODE_DEADLINE:
            kept = [(e, e.deadline) for e in chain if e.deadline is not None]
        else:
            kept = [(e, e.priority) for e in chain if e.priority is not None]
        if kept:
            chains[name] = kept

    universe = build_task_universe(analyzed)

    direct: list = []
    for name in _stream_order(analyzed):
        if name in ann and ann[name]:
            task = frozenset(ann[name][0].pacing.inputs)
            if task and task not in direct:
                direct.append(task)

    combine = min if mode == MODE_DEADLINE else max
    entries: dict = {}
    joint: dict = {}
    for task in universe:
        contributors = [
            name for name in chains
            if ann[name][0].pacing.inputs <= task
        ]
        regions = []
        # product of zero chains would yield one degenerate empty region
        for combo in itertools.product(*(chains[n] for n in contributors)) \
                if contributors else ():
            condition = conjoin([e.condition for e, _ in combo])
            pacing_inputs: set = set()
            for e, _ in combo:
                pacing_inputs |= e.pacing.inputs
            regions.append(ScheduleEntry(
                condition=condition,
                pacing=Pacing.of(pacing_inputs),
                value=combine(v for _, v in combo),
                sources=tuple((e.source, e.clause_index) for e, _ in combo),
            ))
        reverse = mode != MODE_DEADLINE  # high priority first, short deadline first
        regions.sort(key=lambda r: r.value, reverse=reverse)
        entries[task] = tuple(regions)
        joint[task] = frozenset(
            frozenset(ann[n][0].pacing.inputs) for n in contributors)

    bounds: dict = {}
    for task in universe:
        if mode == MODE_PRIORITY:
            bounds[task] = None
            continue
        cands = [
            e.deadline
            for name, chain in ann.items()
            if chain and chain[0].pacing.inputs <= task
            for e in chain
            if e.deadline is not None
        ]
        if cands:
            bounds[task] = min(cands)
        elif default_deadline is not None and any(
                chain and chain[0].pacing.inputs <= task
                for chain in ann.values()):
            bounds[task] = default_deadline
        else:
            bounds[task] = None

    tracked = frozenset(
        t for t in direct
        if entries.get(t) or (mode != MODE_PRIORITY and bounds.get(t) is not None)
    )

    return StaticSchedule(
        mode=mode,
        universe=universe,
        direct=tuple(direct),
        entries=entries,
        bounds=bounds,
        tracked=tracked,
        joint=joint,
    )


# ---------------------------------------------------------------------------
# per-step obligations


class DecisionOracle:
    """Answers, per step of a finished model, which tasks had to be served.

    Verdicts: "Y" means the task must be satisfied at the next step,
    "M" means the scheduler may choose freely.
    """

    def __init__(self, analyzed: AnalyzedSpec, schedule: StaticSchedule,
                 model: EvaluationModel):
        self.analyzed = analyzed
        self.schedule = schedule
        self.model = model
        self.n = len(model)
        self.period = analyzed.config.period
        reader = ModelReader(model)
        inputs = analyzed.spec.input_names()
        self.present = [model.present_inputs(inputs, t) for t in range(self.n)]
        self.sat_sets = [
            frozenset(t for t in schedule.universe if t <= self.present[step])
            for step in range(self.n)
        ]
        self.sat_steps: dict = {
            task: [s for s in range(self.n) if task in self.sat_sets[s]]
            for task in schedule.universe
        }

        # region truth per step, then the sticky current value per task
        combine = schedule.restrictive()
        self.true_steps: dict = {}
        self.current: dict = {}
        for task, chain in schedule.entries.items():
            per_entry = []
            for entry in chain:
                steps = [
                    s for s in range(self.n)
                    if entry.pacing.satisfied_by(self.present[s])
                    and self._holds(reader, entry.condition, s)
                ]
                per_entry.append(steps)
            self.true_steps[task] = per_entry
            values: list = []
            cur = None
            marks = [set(steps) for steps in per_entry]
            for s in range(self.n):
                here = [chain[i].value for i, m in enumerate(marks) if s in m]
                if here:
                    cur = combine(here)
                values.append(cur)
            self.current[task] = values

    def _holds(self, reader: ModelReader, expr: Expr, step: int) -> bool:
        read, offset_read = reader.at_step(step)
        now = float(self.model.times[step])
        return eval_expr(expr, read, offset_read, now) is True

    # -- helpers ------------------------------------------------------------

    def _time(self, step: int) -> Fraction:
        if step < self.n:
            return self.model.times[step]
        return self.model.times[self.n - 1] + (step - self.n + 1) * self.period

    def _last_sat(self, task: Task, upto: int) -> Optional[int]:
        """Latest step <= upto at which task was satisfied, if any."""
        steps = self.sat_steps[task]
        i = bisect_right(steps, upto)
        return steps[i - 1] if i else None

    def overdue(self, task: Task, step: int) -> bool:
        """Staleness at `step`, from satisfactions strictly before it."""
        bound = self.schedule.bounds.get(task)
        if bound is None:
            return False
        last: Optional[int] = None
        for sub in self.schedule.tracked:
            if sub <= task:
                s = self._last_sat(sub, step - 1)
                if s is not None and (last is None or s > last):
                    last = s
        if last is None:
            return True
        return self._time(step) - self.model.times[last] > bound

    # -- the three obligation rules -----------------------------------------

    def decide(self, step: int) -> dict:
        """Verdicts for every universe task, given the model through step+1."""
        if not 0 <= step <= self.n - 2:
            raise ValueError(f"step {step} needs the model through {step + 2}")
        if self.schedule.mode == MODE_DEADLINE:
            return self._decide_deadline(step)
        if self.schedule.mode == MODE_PRIORITY:
            return self._decide_priority(step)
        return self._decide_dp(step)

    def _decide_deadline(self, step: int) -> dict:
        out = {}
        horizon = self._time(step + 2)
        for task in self.schedule.universe:
            verdict = "M"
            anchor = self._last_sat(task, step)
            lo = anchor if anchor is not None else 0
            for entry, steps in zip(self.schedule.entries[task],
                                    self.true_steps[task]):
                i = bisect_right(steps, lo - 1)
                if i < len(steps) and steps[i] <= step:
                    if horizon > self.model.times[steps[i]] + entry.value:
                        verdict = "Y"
                        break
            out[task] = verdict
        return out

    def _priority_witness(self, task: Task, step: int,
                          extra: Optional[Callable[[Task], bool]] = None) -> bool:
        """A strictly lower-priority satisfied task while this one is unserved."""
        p1 = self.current[task][step]
        if p1 is None:
            return False
        for sup in self.schedule.universe:
            if task <= sup and sup in self.sat_sets[step + 1]:
                return False
        for other in self.schedule.universe:
            p2 = self.current[other][step]
            if p2 is None or other not in self.sat_sets[step + 1]:
                continue
            if p1 > p2 and (extra is None or extra(other)):
                return True
        return False

    def _decide_priority(self, step: int) -> dict:
        return {
            task: "Y" if self._priority_witness(task, step) else "M"
            for task in self.schedule.universe
        }

    def _decide_dp(self, step: int) -> dict:
        out = {}
        over = {t: self.overdue(t, step + 1) for t in self.schedule.universe}
        fresh_sat = [t for t in self.sat_sets[step + 1] if not over[t]]
        for task in self.schedule.universe:
            if over[task] and fresh_sat:
                out[task] = "Y"
            elif self._priority_witness(task, step,
                                        extra=lambda o: not over[o]):
                out[task] = "Y"
            else:
                out[task] = "M"
        return out


def dynamic_decision(analyzed: AnalyzedSpec, schedule: StaticSchedule,
                     model: EvaluationModel, step: int) -> dict:
    """One-shot oracle call; build a DecisionOracle for repeated queries."""
    return DecisionOracle(analyzed, schedule, model).decide(step)


# ---------------------------------------------------------------------------
# model-level checks


def check_bandwidth(bound: int, model: EvaluationModel, inputs, step: int) -> bool:
    return len(model.present_inputs(tuple(inputs), step)) <= bound


def valid_tasks(universe: frozenset, model: EvaluationModel, inputs,
                step: int, selected: frozenset) -> bool:
    """Selected tasks are exactly the satisfied ones, closed upward and
    under union."""
    present = model.present_inputs(tuple(inputs), step)
    for task in selected:
        if not task <= present:
            return False
    for task in universe - selected:
        if task <= present:
            return False
    for task in selected:
        for sup in universe:
            if task <= sup and sup <= present and sup not in selected:
                return False
    for a, b in itertools.combinations(selected, 2):
        if (a | b) not in selected:
            return False
    return True


def check_scheduled_model(analyzed: AnalyzedSpec, schedule: StaticSchedule,
                          bound: int, model: EvaluationModel) -> list:
    """Semantic, bandwidth and obligation conformance of a finished run."""
    violations = list(verify_model(analyzed, model))
    inputs = analyzed.spec.input_names()
    for step in range(len(model)):
        got = model.present_inputs(inputs, step)
        if len(got) > bound:
            violations.append(Violation(
                kind="bandwidth", step=step, time=model.times[step],
                detail=f"{len(got)} inputs arrive at once, bound is {bound}"))
    if len(model) >= 2 and schedule.universe:
        oracle = DecisionOracle(analyzed, schedule, model)
        for step in range(len(model) - 1):
            for task, verdict in oracle.decide(step).items():
                if verdict == "Y" and task not in oracle.sat_sets[step + 1]:
                    violations.append(Violation(
                        kind="schedule", step=step + 1,
                        time=model.times[step + 1],
                        detail="obligated task left unsatisfied",
                        task=tuple(sorted(task))))
    return violations
