"""Synthetic flight traces, fixed-frequency baselines, and run comparison.

The sensor model is zero-order hold over a sampled trace. Anything with a
``query(sensor, at)`` method can stand in for TraceSource, so a live
simulator backend can be plugged into the scheduler without touching it.
"""

from __future__ import annotations

import hashlib
import math
import statistics
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from random import Random
from typing import Optional

from .analysis import AnalyzedSpec
from .engine import ABSENT, Event, EvaluationModel, run_monitor_full
from .errors import MismatchedTraces, OutOfRange, SensorUnavailable

GRID_HZ = 10  # sampling grid of generated traces


# ---------------------------------------------------------------------------
# traces and zero-order-hold queries


@dataclass(frozen=True)
class SensorTrace:
    """Per-sensor sampled signals; times strictly increasing per sensor."""

    samples: dict  # sensor -> list of (Fraction time, value)

    def __post_init__(self):
        for sensor, seq in self.samples.items():
            if not seq:
                raise ValueError(f"sensor '{sensor}' has no samples")
            times = [t for t, _ in seq]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"sensor '{sensor}' times not increasing")

    def sensors(self):
        return sorted(self.samples)

    def span(self):
        first = min(seq[0][0] for seq in self.samples.values())
        last = max(seq[-1][0] for seq in self.samples.values())
        return first, last


def query_sensor(trace: SensorTrace, sensor: str, time):
    """Value of the latest sample at or before `time` (zero-order hold)."""
    if sensor not in trace.samples:
        raise SensorUnavailable(sensor, time)
    seq = trace.samples[sensor]
    times = [t for t, _ in seq]
    if time > times[-1]:
        raise OutOfRange(f"t={time} is past the last sample of '{sensor}'")
    idx = bisect_right(times, time) - 1
    if idx < 0:
        raise OutOfRange(f"t={time} precedes the first sample of '{sensor}'")
    return seq[idx][1]


class TraceSource:
    """Sensor source over a trace; the scheduler's query endpoint."""

    def __init__(self, trace: SensorTrace):
        self.trace = trace
        self._times = {s: [t for t, _ in seq] for s, seq in trace.samples.items()}
        self._values = {s: [v for _, v in seq] for s, seq in trace.samples.items()}

    def query(self, sensor: str, at):
        times = self._times.get(sensor)
        if times is None:
            raise SensorUnavailable(sensor, at)
        if at > times[-1]:
            raise OutOfRange(f"t={at} is past the last sample of '{sensor}'")
        idx = bisect_right(times, at) - 1
        if idx < 0:
            raise OutOfRange(f"t={at} precedes the first sample of '{sensor}'")
        return self._values[sensor][idx]


def sensor_trace_from_events(events, input_names) -> SensorTrace:
    """Collect each sensor's non-absent samples out of an event trace."""
    samples = {name: [] for name in input_names}
    for ev in events:
        for name, value in ev.values.items():
            if name in samples and value is not ABSENT:
                samples[name].append((ev.time, value))
    return SensorTrace({k: v for k, v in samples.items() if v})


def trace_fingerprint(trace: SensorTrace) -> str:
    h = hashlib.sha1()
    for sensor in trace.sensors():
        h.update(sensor.encode())
        for t, v in trace.samples[sensor]:
            h.update(f"{t}:{v!r};".encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# synthetic drone flights


@dataclass(frozen=True)
class FlightScenario:
    """Seeded flight profile; every derived quantity is deterministic."""

    seed: int
    duration: float = 60.0
    geofence_radius: float = 8.0
    altitude_ceiling: float = 10.0
    start_lat: float = 47.0
    start_long: float = 9.0
    ground_altitude: float = 1.0


def _dodge_grid(t: float, period: float = 0.5, margin: float = 0.06) -> bool:
    frac = t % period
    return min(frac, period - frac) < margin


class _Profile:
    """Closed-form piecewise-linear trajectory for one scenario.

    The drone holds at the start, flies a straight outbound leg through the
    geofence, turns and comes home; independently it climbs through the
    altitude ceiling and descends. Leg speeds keep each warning band wider
    than the staleness bound so an active monitor has time to react.
    """

    def __init__(self, sc: FlightScenario):
        rng = Random(sc.seed)
        self.sc = sc
        self.bearing = rng.uniform(0.0, 2.0 * math.pi)

        move = rng.uniform(2.0, 4.0)
        v_out = rng.uniform(0.30, 0.40)
        while _dodge_grid(move + sc.geofence_radius / v_out):
            move += 0.137
        self.move_start = move
        self.v_out = v_out
        self.geofence_cross = move + sc.geofence_radius / v_out
        self.r_peak = rng.uniform(sc.geofence_radius + 0.8, sc.geofence_radius + 1.4)
        self.turn = move + self.r_peak / v_out
        self.return_start = self.turn + rng.uniform(2.0, 4.0)
        v_ret = rng.uniform(0.55, 0.75)
        latest = sc.duration - 3.0
        if self.return_start + (self.r_peak - 1.0) / v_ret > latest:
            v_ret = (self.r_peak - 1.0) / (latest - self.return_start)
        self.v_ret = v_ret
        self.home = self.return_start + (self.r_peak - 1.0) / v_ret

        climb = rng.uniform(6.0, 10.0)
        v_climb = rng.uniform(0.36, 0.44)
        while _dodge_grid(climb + sc.altitude_ceiling / v_climb):
            climb += 0.137
        self.climb_start = climb
        self.v_climb = v_climb
        self.altitude_cross = climb + sc.altitude_ceiling / v_climb
        self.a_peak = rng.uniform(sc.altitude_ceiling + 0.8, sc.altitude_ceiling + 1.6)
        self.level = climb + self.a_peak / v_climb
        self.descend_start = self.level + rng.uniform(2.0, 4.0)
        v_desc = rng.uniform(0.50, 0.70)
        if self.descend_start + (self.a_peak - 2.0) / v_desc > latest:
            v_desc = (self.a_peak - 2.0) / (latest - self.descend_start)
        self.v_desc = v_desc

        self.p_drift = rng.uniform(0.005, 0.02)
        self.phase1 = rng.uniform(0.0, 2.0 * math.pi)
        self.phase2 = rng.uniform(0.0, 2.0 * math.pi)
        self.phase3 = rng.uniform(0.0, 2.0 * math.pi)

    def distance(self, t: float) -> float:
        if t <= self.move_start:
            return 0.0
        if t <= self.turn:
            return self.v_out * (t - self.move_start)
        if t <= self.return_start:
            return self.r_peak
        return max(1.0, self.r_peak - self.v_ret * (t - self.return_start))

    def above_ground(self, t: float) -> float:
        if t <= self.climb_start:
            return 0.0
        if t <= self.level:
            return self.v_climb * (t - self.climb_start)
        if t <= self.descend_start:
            return self.a_peak
        return max(2.0, self.a_peak - self.v_desc * (t - self.descend_start))

    def lat_long(self, t: float):
        d = self.distance(t) / 10000.0
        return (self.sc.start_lat + d * math.cos(self.bearing),
                self.sc.start_long + d * math.sin(self.bearing))

    def altitude(self, t: float) -> float:
        return self.sc.ground_altitude + self.above_ground(t)

    def pressure(self, t: float) -> float:
        return (1013.25 - self.p_drift * t
                + 0.8 * math.sin(2.0 * math.pi * t / 37.0 + self.phase1)
                + 0.3 * math.sin(2.0 * math.pi * t / 11.0 + self.phase2))

    def baro_altitude(self, t: float) -> float:
        return self.altitude(t) + 0.15 * math.sin(
            2.0 * math.pi * t / 13.0 + self.phase3)


def generate_flight(scenario: FlightScenario) -> SensorTrace:
    """Sample the scenario's trajectory on the fixed grid."""
    prof = _Profile(scenario)
    steps = int(round(scenario.duration * GRID_HZ))
    samples = {"gps_lat_long": [], "gps_altitude": [],
               "barometer_pressure": [], "barometer_altitude": []}
    for k in range(steps + 1):
        t = Fraction(k, GRID_HZ)
        tf = k / GRID_HZ
        samples["gps_lat_long"].append((t, prof.lat_long(tf)))
        samples["gps_altitude"].append((t, prof.altitude(tf)))
        samples["barometer_pressure"].append((t, prof.pressure(tf)))
        samples["barometer_altitude"].append((t, prof.baro_altitude(tf)))
    return SensorTrace(samples)


def flight_crossings(scenario: FlightScenario) -> dict:
    """Closed-form ground-truth violation onsets, by kind."""
    prof = _Profile(scenario)
    return {"geofence": [prof.geofence_cross],
            "altitude": [prof.altitude_cross]}


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class RunMetrics:
    horizon: float
    total_values: int
    per_sensor: dict  # sensor -> values per second
    groups: dict  # group name -> values per second
    fingerprint: Optional[str] = None

    @property
    def values_per_second(self) -> float:
        return self.total_values / self.horizon if self.horizon else 0.0

    def as_json(self) -> dict:
        return {"horizon": self.horizon, "total_values": self.total_values,
                "values_per_second": self.values_per_second,
                "per_sensor": dict(self.per_sensor),
                "groups": dict(self.groups)}


def compute_metrics(model: EvaluationModel, input_names, horizon: float,
                    groups: Optional[dict] = None,
                    fingerprint: Optional[str] = None) -> RunMetrics:
    """Bandwidth accounting: non-absent input cells per second."""
    counts = {}
    for name in input_names:
        column = model.streams.get(name, [])
        counts[name] = sum(1 for v in column if v is not ABSENT)
    total = sum(counts.values())
    per_sensor = {s: c / horizon for s, c in counts.items()}
    grouped = {}
    for gname, members in (groups or {}).items():
        grouped[gname] = sum(counts.get(m, 0) for m in members) / horizon
    return RunMetrics(horizon, total, per_sensor, grouped, fingerprint)


# ---------------------------------------------------------------------------
# fixed-frequency baseline


@dataclass
class BaselineRun:
    model: EvaluationModel
    triggers: list
    metrics: RunMetrics


def run_fixed(analyzed: AnalyzedSpec, trace: SensorTrace, freq,
              horizon: Optional[float] = None, groups: Optional[dict] = None) -> BaselineRun:
    """Query every sensor each 1/freq seconds and feed the monitor."""
    freq = Fraction(str(freq)) if isinstance(freq, float) else Fraction(freq)
    if freq <= 0:
        raise ValueError("frequency must be positive")
    period = 1 / freq
    source = TraceSource(trace)
    _, last = trace.span()
    inputs = analyzed.spec.input_names()
    events = []
    k = 0
    while True:
        at = k * period
        if horizon is not None:
            if at >= horizon:
                break
        elif at > last:
            break
        events.append(Event(at, {s: source.query(s, at) for s in inputs}))
        k += 1
    model, triggers = run_monitor_full(analyzed, events)
    span = horizon if horizon is not None else float(last)
    metrics = compute_metrics(model, inputs, span, groups,
                              trace_fingerprint(trace))
    return BaselineRun(model, triggers, metrics)


# ---------------------------------------------------------------------------
# run comparison


@dataclass
class ComparisonReport:
    window: float
    rows: list  # one dict per (run, trigger, crossing)
    summary: dict  # run name -> aggregate stats

    def csv_lines(self):
        yield "run,trigger,crossing,detection,delay"
        for row in self.rows:
            det = "" if row["detection"] is None else repr(row["detection"])
            delay = "" if row["delay"] is None else repr(row["delay"])
            yield (f"{row['run']},{row['trigger']},{row['crossing']!r},"
                   f"{det},{delay}")


def _quartiles(values):
    if not values:
        return None, None, None
    if len(values) == 1:
        return values[0], values[0], values[0]
    q1, q2, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q1, q2, q3


def compare_runs(runs, ground_truth: dict, window: float = 5.0) -> ComparisonReport:
    """Match detections of the same violation across runs and rate them.

    `runs` is a list of (name, trigger_reports, metrics). A detection
    belongs to a ground-truth crossing when it falls within `window`
    seconds after it; delays are relative to the earliest detector.
    """
    prints = {m.fingerprint for _, _, m in runs if m.fingerprint is not None}
    if len(prints) > 1:
        raise MismatchedTraces("runs observed different traces")

    detections = {}
    for name, reports, _ in runs:
        for trigger, crossings in ground_truth.items():
            times = sorted(float(r.time) for r in reports if r.trigger == trigger)
            for ci in crossings:
                hit = next((t for t in times if ci <= t <= ci + window), None)
                detections[(name, trigger, ci)] = hit

    rows = []
    for trigger, crossings in ground_truth.items():
        for ci in crossings:
            hits = [detections[(name, trigger, ci)] for name, _, _ in runs]
            base = min((h for h in hits if h is not None), default=None)
            for (name, _, _), hit in zip(runs, hits):
                delay = None if hit is None or base is None else hit - base
                rows.append({"run": name, "trigger": trigger, "crossing": ci,
                             "detection": hit, "delay": delay})

    summary = {}
    for name, _, metrics in runs:
        delays = [r["delay"] for r in rows
                  if r["run"] == name and r["delay"] is not None]
        missed = sum(1 for r in rows
                     if r["run"] == name and r["detection"] is None)
        q1, q2, q3 = _quartiles(delays)
        summary[name] = {"delays": delays, "median_delay": q2,
                         "q1_delay": q1, "q3_delay": q3, "missed": missed,
                         "bandwidth": metrics.as_json()}
    return ComparisonReport(window, rows, summary)


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class ScenarioResult:
    scenario: FlightScenario
    crossings: dict
    report: ComparisonReport
    scheduled_run: object  # ScheduledRun, kept for plan-log checks


@dataclass
class ExperimentResult:
    results: list  # ScenarioResult per scenario
    rows: list  # comparison rows with a seed column
    summary: dict

    def csv_lines(self):
        yield "seed,run,trigger,crossing,detection,delay"
        for row in self.rows:
            det = "" if row["detection"] is None else repr(row["detection"])
            delay = "" if row["delay"] is None else repr(row["delay"])
            yield (f"{row['seed']},{row['run']},{row['trigger']},"
                   f"{row['crossing']!r},{det},{delay}")


def run_experiment(config: dict, analyzed: AnalyzedSpec,
                   translation) -> ExperimentResult:
    """Run the scheduled monitor and every baseline over each scenario."""
    from .scheduler import run_scheduled  # deferred: scheduler stays sim-free

    mode = translation.schedule.mode
    bound = int(config.get("bound", 2))
    horizon = float(config.get("horizon", 60.0))
    window = float(config.get("window", 5.0))
    groups = config.get("groups") or {}
    kinds = config.get("trigger_kinds") or {}
    baselines = [Fraction(str(f)) for f in config.get("baselines", [1.0, 2.0])]
    inputs = analyzed.spec.input_names()

    results = []
    rows = []
    for entry in config["scenarios"]:
        scenario = FlightScenario(**entry)
        trace = generate_flight(scenario)
        fingerprint = trace_fingerprint(trace)
        crossings = flight_crossings(scenario)
        truth = {trigger: crossings.get(kind, [])
                 for trigger, kind in kinds.items()}

        sched = run_scheduled(translation, TraceSource(trace), horizon, bound)
        sched_metrics = compute_metrics(
            sched.model, inputs, horizon, groups, fingerprint)
        runs = [(f"scheduled_{mode}", sched.triggers, sched_metrics)]
        for f in baselines:
            base = run_fixed(analyzed, trace, f, horizon, groups)
            runs.append((f"fixed_{float(f):g}hz", base.triggers, base.metrics))

        report = compare_runs(runs, truth, window)
        results.append(ScenarioResult(scenario, crossings, report, sched))
        for row in report.rows:
            rows.append(dict(row, seed=scenario.seed))

    summary = {"window": window, "monitors": {}, "scenarios": [
        {"seed": r.scenario.seed, **{k: v for k, v in r.crossings.items()}}
        for r in results]}
    seen = []
    for row in rows:
        if row["run"] not in seen:
            seen.append(row["run"])
    for name in seen:
        delays = [r["delay"] for r in rows
                  if r["run"] == name and r["delay"] is not None]
        missed = sum(1 for r in rows
                     if r["run"] == name and r["detection"] is None)
        q1, q2, q3 = _quartiles(delays)
        bandwidth = None
        for res in results:
            if name in res.report.summary:
                bandwidth = res.report.summary[name]["bandwidth"]
                break
        summary["monitors"][name] = {
            "median_delay": q2, "q1_delay": q1, "q3_delay": q3,
            "matched": len(delays), "missed": missed, "bandwidth": bandwidth}
    return ExperimentResult(results, rows, summary)


__all__ = [
    "BaselineRun", "ComparisonReport", "ExperimentResult", "FlightScenario",
    "GRID_HZ", "RunMetrics", "ScenarioResult", "SensorTrace", "TraceSource",
    "compare_runs", "compute_metrics", "flight_crossings", "generate_flight",
    "query_sensor", "run_experiment", "run_fixed", "sensor_trace_from_events",
    "trace_fingerprint",
]
