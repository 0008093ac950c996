"""File formats: trace CSV, model CSV, and the JSON/JSONL sidecars.

Times are exact rationals serialized as decimal strings whenever they
terminate (falling back to p/q), so reading a written file reproduces the
values bit for bit. Empty CSV cells mean absent.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction

from .analysis import AnalyzedSpec
from .ast import BOOL, FLOAT64, INT64, UINT64, ScalarType, TupleType, Type
from .engine import ABSENT, Event, EvaluationModel, TriggerReport, Violation
from .errors import NonMonotonicTime, SpecSyntaxError


# ---------------------------------------------------------------------------
# scalar cells


def format_time(t: Fraction) -> str:
    """Exact decimal when the denominator is 2^a 5^b, else p/q."""
    den = t.denominator
    while den % 2 == 0:
        den //= 2
    while den % 5 == 0:
        den //= 5
    if den != 1:
        return f"{t.numerator}/{t.denominator}"
    if t.denominator == 1:
        return str(t.numerator)
    scale = 1
    digits = 0
    while scale % t.denominator != 0:
        scale *= 10
        digits += 1
    units = t.numerator * (scale // t.denominator)
    sign = "-" if units < 0 else ""
    units = abs(units)
    whole, frac = divmod(units, scale)
    return f"{sign}{whole}.{str(frac).zfill(digits)}"


def parse_time(cell: str) -> Fraction:
    return Fraction(cell)


def format_value(v) -> str:
    if v is ABSENT:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ";".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(cell: str, ty: Type):
    if cell == "":
        return ABSENT
    if isinstance(ty, TupleType):
        parts = cell.split(";")
        if len(parts) != len(ty.elements):
            raise ValueError(f"expected {len(ty.elements)} tuple parts, got {cell!r}")
        return tuple(parse_value(p, el) for p, el in zip(parts, ty.elements))
    if ty == BOOL:
        if cell == "true":
            return True
        if cell == "false":
            return False
        raise ValueError(f"invalid Bool cell {cell!r}")
    if ty in (INT64, UINT64):
        return int(cell)
    return float(cell)


# ---------------------------------------------------------------------------
# trace CSV (inputs only)


def write_trace(path, events: list[Event], input_names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", *input_names])
        for ev in events:
            row = [format_time(ev.time)]
            for name in input_names:
                row.append(format_value(ev.values.get(name, ABSENT)))
            writer.writerow(row)


def read_trace(path, analyzed: AnalyzedSpec) -> list[Event]:
    types = analyzed.types
    known = set(analyzed.spec.input_names())
    events: list[Event] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time":
            raise SpecSyntaxError("trace header must start with 'time'", str(path), 1, 1)
        names = header[1:]
        missing = set(names) - known
        if missing:
            raise SpecSyntaxError(
                f"trace columns are not spec inputs: {sorted(missing)}",
                str(path), 1, 1)
        previous = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            t = parse_time(row[0])
            if previous is not None and t <= previous:
                raise NonMonotonicTime(
                    f"{path}:{lineno}: time {t} does not advance past {previous}")
            previous = t
            values = {}
            for name, cell in zip(names, row[1:]):
                v = parse_value(cell, types[name])
                if v is not ABSENT:
                    values[name] = v
            if values:
                events.append(Event(t, values))
    if not events:
        raise SpecSyntaxError("trace has no events", str(path), 1, 1)
    return events


# ---------------------------------------------------------------------------
# model CSV (all streams)


def write_model(path, model: EvaluationModel, stream_names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", *stream_names])
        for t in range(len(model.times)):
            row = [format_time(model.times[t])]
            row.extend(format_value(model.streams[name][t]) for name in stream_names)
            writer.writerow(row)


def read_model(path, analyzed: AnalyzedSpec) -> EvaluationModel:
    types = analyzed.types
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time":
            raise SpecSyntaxError("model header must start with 'time'", str(path), 1, 1)
        names = header[1:]
        missing = set(names) - set(types)
        if missing:
            raise SpecSyntaxError(
                f"model columns are not spec streams: {sorted(missing)}",
                str(path), 1, 1)
        model = EvaluationModel(streams={name: [] for name in names})
        for row in reader:
            if not row:
                continue
            model.times.append(parse_time(row[0]))
            for name, cell in zip(names, row[1:]):
                model.streams[name].append(parse_value(cell, types[name]))
            for name in names[len(row) - 1:]:
                model.streams[name].append(ABSENT)
    return model


# ---------------------------------------------------------------------------
# JSONL sidecars


def trigger_json(report: TriggerReport) -> str:
    return json.dumps({
        "trigger": report.trigger,
        "time": float(report.time),
        "message": report.message,
    })


def write_triggers(path, reports) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(trigger_json(r) + "\n")


def violation_json(v: Violation) -> str:
    record = {"kind": v.kind, "step": v.step,
              "time": float(v.time) if isinstance(v.time, Fraction) else v.time,
              "detail": v.detail}
    if v.stream is not None:
        record["stream"] = v.stream
    if v.task is not None:
        record["task"] = list(v.task)
    return json.dumps(record)


def write_violations(path, violations) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in violations:
            fh.write(violation_json(v) + "\n")


def write_plan_log(path, plans, mode) -> None:
    """Per-event audit records {time, queried, selected, mode}."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in plans:
            fh.write(json.dumps({
                "time": float(p.time),
                "queried": sorted(p.flat),
                "selected": [sorted(task) for task in
                             sorted(p.selected, key=sorted)],
                "mode": mode,
            }) + "\n")


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


__all__ = [
    "format_time", "format_value", "parse_time", "parse_value", "read_json",
    "read_model", "read_trace", "trigger_json", "violation_json",
    "write_json", "write_model", "write_plan_log", "write_trace",
    "write_triggers", "write_violations",
]
