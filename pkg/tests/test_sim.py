"""Sensor traces, synthetic flights, baselines, and run comparison."""

import math
from fractions import Fraction

import pytest

from activemon.analysis import analyze
from activemon.engine import ABSENT, Event, EvaluationModel, TriggerReport
from activemon.errors import MismatchedTraces, OutOfRange, SensorUnavailable
from activemon.parser import parse_spec
from activemon.sim import (
    FlightScenario,
    SensorTrace,
    TraceSource,
    compare_runs,
    compute_metrics,
    flight_crossings,
    generate_flight,
    query_sensor,
    run_fixed,
    sensor_trace_from_events,
    trace_fingerprint,
)

HOLD = SensorTrace({"s": [(Fraction(0), 1.0), (Fraction(1), 2.0)]})


# ---------------------------------------------------------------------------
# zero-order hold


def test_query_holds_last_sample():
    assert query_sensor(HOLD, "s", Fraction(1, 2)) == 1.0
    assert query_sensor(HOLD, "s", Fraction(1)) == 2.0
    assert query_sensor(HOLD, "s", Fraction(0)) == 1.0


def test_query_rejects_out_of_range_times():
    with pytest.raises(OutOfRange):
        query_sensor(HOLD, "s", Fraction(3, 2))
    with pytest.raises(OutOfRange):
        query_sensor(HOLD, "s", Fraction(-1, 2))


def test_query_rejects_unknown_sensor():
    with pytest.raises(SensorUnavailable):
        query_sensor(HOLD, "nope", Fraction(0))


def test_trace_source_matches_query_sensor():
    source = TraceSource(HOLD)
    for t in (Fraction(0), Fraction(1, 2), Fraction(9, 10), Fraction(1)):
        assert source.query("s", t) == query_sensor(HOLD, "s", t)
    with pytest.raises(OutOfRange):
        source.query("s", Fraction(2))
    with pytest.raises(SensorUnavailable):
        source.query("nope", Fraction(0))


def test_trace_rejects_unsorted_samples():
    with pytest.raises(ValueError):
        SensorTrace({"s": [(Fraction(1), 1.0), (Fraction(1), 2.0)]})
    with pytest.raises(ValueError):
        SensorTrace({"s": []})


def test_sensor_trace_from_events_drops_absent_cells():
    events = [
        Event(Fraction(0), {"a": 1.0, "b": ABSENT}),
        Event(Fraction(1), {"a": 2.0}),
        Event(Fraction(2), {"b": 3.0}),
    ]
    trace = sensor_trace_from_events(events, ("a", "b"))
    assert trace.samples == {
        "a": [(Fraction(0), 1.0), (Fraction(1), 2.0)],
        "b": [(Fraction(2), 3.0)],
    }


def test_fingerprint_is_stable_and_discriminating():
    one = generate_flight(FlightScenario(seed=7))
    two = generate_flight(FlightScenario(seed=7))
    other = generate_flight(FlightScenario(seed=8))
    assert trace_fingerprint(one) == trace_fingerprint(two)
    assert trace_fingerprint(one) != trace_fingerprint(other)


# ---------------------------------------------------------------------------
# synthetic flights


def test_flight_samples_the_full_grid():
    trace = generate_flight(FlightScenario(seed=3))
    assert trace.sensors() == [
        "barometer_altitude", "barometer_pressure",
        "gps_altitude", "gps_lat_long"]
    for sensor in trace.sensors():
        seq = trace.samples[sensor]
        assert len(seq) == 601
        assert seq[0][0] == 0 and seq[-1][0] == 60
    assert trace.span() == (Fraction(0), Fraction(60))


def _distance(sample, start):
    (lat, lon) = sample
    return math.sqrt((lat - start[0]) ** 2 + (lon - start[1]) ** 2) * 10000.0


@pytest.mark.parametrize("seed", [1, 137, 588])
def test_crossings_match_the_sampled_trajectory(seed):
    scenario = FlightScenario(seed=seed)
    trace = generate_flight(scenario)
    crossings = flight_crossings(scenario)
    (tg,) = crossings["geofence"]
    (ta,) = crossings["altitude"]
    assert 0 < tg < 60 and 0 < ta < 60

    start = trace.samples["gps_lat_long"][0][1]
    before = query_sensor(trace, "gps_lat_long", Fraction(int((tg - 0.2) * 10), 10))
    after = query_sensor(trace, "gps_lat_long", Fraction(int((tg + 0.3) * 10), 10))
    assert _distance(before, start) < 8.0 <= _distance(after, start)

    ground = trace.samples["gps_altitude"][0][1]
    low = query_sensor(trace, "gps_altitude", Fraction(int((ta - 0.2) * 10), 10))
    high = query_sensor(trace, "gps_altitude", Fraction(int((ta + 0.3) * 10), 10))
    assert low - ground < 10.0 <= high - ground


@pytest.mark.parametrize("seed", [101, 137, 202, 211, 308, 355, 404, 467, 523, 588])
def test_crossings_stay_off_the_half_second_grid(seed):
    crossings = flight_crossings(FlightScenario(seed=seed))
    for times in crossings.values():
        for t in times:
            frac = t % 0.5
            assert min(frac, 0.5 - frac) >= 0.05


# ---------------------------------------------------------------------------
# metrics and baselines


def test_metrics_count_present_input_cells():
    model = EvaluationModel(
        times=[Fraction(0), Fraction(1), Fraction(2)],
        streams={"a": [1.0, ABSENT, 2.0], "b": [ABSENT, 3.0, 4.0],
                 "out": [1.0, 1.0, 1.0]})
    metrics = compute_metrics(model, ("a", "b"), 2.0,
                              groups={"gps": ["a"], "both": ["a", "b"]})
    assert metrics.total_values == 4
    assert metrics.values_per_second == 2.0
    assert metrics.per_sensor == {"a": 1.0, "b": 1.0}
    assert metrics.groups == {"gps": 1.0, "both": 2.0}


def test_fixed_baseline_queries_every_sensor(drone_text):
    analyzed = analyze(parse_spec(drone_text))
    trace = generate_flight(FlightScenario(seed=137))
    base = run_fixed(analyzed, trace, 2, horizon=60.0)
    assert len(base.model) == 120
    assert base.metrics.total_values == 480
    assert base.metrics.values_per_second == 8.0
    half = run_fixed(analyzed, trace, 1, horizon=60.0)
    assert half.metrics.values_per_second == 4.0


def test_fixed_baseline_defaults_to_trace_span():
    spec = analyze(parse_spec("input s : Float64\noutput o := s + 1.0\n"))
    base = run_fixed(spec, HOLD, 1)
    assert base.model.times == [Fraction(0), Fraction(1)]
    assert base.model.streams["o"] == [2.0, 3.0]


def test_fixed_baseline_rejects_bad_frequency():
    spec = analyze(parse_spec("input s : Float64\noutput o := s\n"))
    with pytest.raises(ValueError):
        run_fixed(spec, HOLD, 0)


# ---------------------------------------------------------------------------
# comparing runs


def _report(trigger, time):
    return TriggerReport(trigger, 0, Fraction(str(time)), None)


def _metrics(fingerprint):
    return compute_metrics(EvaluationModel(), (), 1.0, fingerprint=fingerprint)


def test_compare_runs_normalizes_delays():
    truth = {"breach": [10.0]}
    runs = [
        ("fast", [_report("breach", 10.4)], _metrics("f")),
        ("slow", [_report("breach", 12.0)], _metrics("f")),
        ("blind", [_report("breach", 16.0)], _metrics("f")),  # out of window
    ]
    report = compare_runs(runs, truth, window=5.0)
    by_run = {r["run"]: r for r in report.rows}
    assert by_run["fast"]["delay"] == 0.0
    assert abs(by_run["slow"]["delay"] - 1.6) < 1e-9
    assert by_run["blind"]["detection"] is None
    assert report.summary["slow"]["median_delay"] == by_run["slow"]["delay"]
    assert report.summary["blind"]["missed"] == 1
    assert report.summary["fast"]["missed"] == 0


def test_compare_runs_ignores_detections_before_the_crossing():
    truth = {"breach": [10.0]}
    runs = [("early", [_report("breach", 9.9)], _metrics(None))]
    report = compare_runs(runs, truth)
    assert report.rows[0]["detection"] is None


def test_compare_runs_rejects_mismatched_traces():
    runs = [
        ("a", [], _metrics("one")),
        ("b", [], _metrics("two")),
    ]
    with pytest.raises(MismatchedTraces):
        compare_runs(runs, {})


def test_comparison_csv_shape():
    truth = {"breach": [10.0]}
    runs = [("only", [_report("breach", 10.5)], _metrics(None))]
    lines = list(compare_runs(runs, truth).csv_lines())
    assert lines[0] == "run,trigger,crossing,detection,delay"
    assert lines[1] == "only,breach,10.0,10.5,0.0"
