"""Command line front end.

Subcommands: translate, run, baseline, compare, check. Trigger reports go
to stdout as JSONL; everything else lands in --out-dir when given. Exit
codes: 0 clean (triggers included), 1 oracle violations, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .analysis import analyze
from .ast import format_spec
from .engine import verify_model
from .errors import SpecError
from .io import (read_model, read_trace, trigger_json, violation_json,
                 write_json, write_model, write_plan_log, write_triggers)
from .parser import parse_spec
from .schedule import check_scheduled_model
from .scheduler import run_scheduled
from .sim import (FlightScenario, TraceSource, compute_metrics,
                  generate_flight, run_experiment, run_fixed,
                  sensor_trace_from_events, trace_fingerprint)
from .translate import translate

SPEC_DIR = Path(__file__).parent / "specs"
MODES = ["deadline", "priority", "dp"]


def _load(path) -> tuple:
    text = Path(path).read_text(encoding="utf-8")
    analyzed = analyze(parse_spec(text, filename=str(path)))
    return analyzed


def _emit_metrics(metrics, out_dir):
    if out_dir is not None:
        write_json(Path(out_dir) / "metrics.json", metrics.as_json())
    else:
        print(json.dumps(metrics.as_json()), file=sys.stderr)


def cmd_translate(args) -> int:
    analyzed = _load(args.spec)
    tr = translate(analyzed, args.mode)
    text = format_spec(tr.spec)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.task_table:
        write_json(args.task_table, tr.task_table)
    return 0


def _source_for(args, analyzed):
    if args.scenario:
        entry = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
        scenario = FlightScenario(**entry)
        trace = generate_flight(scenario)
        horizon = args.horizon if args.horizon is not None else scenario.duration
    else:
        events = read_trace(args.trace, analyzed)
        trace = sensor_trace_from_events(events, analyzed.spec.input_names())
        if args.horizon is not None:
            horizon = args.horizon
        else:
            _, last = trace.span()
            horizon = float(last + analyzed.config.period)
    return trace, horizon


def cmd_run(args) -> int:
    analyzed = _load(args.spec)
    tr = translate(analyzed, args.mode)
    trace, horizon = _source_for(args, analyzed)
    bound = args.bound if args.bound is not None else analyzed.config.bandwidth
    run = run_scheduled(tr, TraceSource(trace), horizon, bound)
    if not run.report.ok or run.report.deadline_warnings:
        for line in run.report.lines():
            print(line, file=sys.stderr)
    for report in run.triggers:
        print(trigger_json(report))
    inputs = analyzed.spec.input_names()
    metrics = compute_metrics(run.model, inputs, float(horizon),
                              fingerprint=trace_fingerprint(trace))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_triggers(out / "triggers.jsonl", run.triggers)
        write_model(out / "model.csv", run.model, tr.plain.spec.stream_names())
        write_plan_log(out / "plans.jsonl", run.plans, tr.mode)
        _emit_metrics(metrics, out)
    else:
        _emit_metrics(metrics, None)
    return 0


def cmd_baseline(args) -> int:
    analyzed = _load(args.spec)
    events = read_trace(args.trace, analyzed)
    trace = sensor_trace_from_events(events, analyzed.spec.input_names())
    horizon = args.horizon
    base = run_fixed(analyzed, trace, Fraction(args.freq), horizon)
    for report in base.triggers:
        print(trigger_json(report))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_triggers(out / "triggers.jsonl", base.triggers)
        write_model(out / "model.csv", base.model,
                    analyzed.spec.stream_names())
        _emit_metrics(base.metrics, out)
    else:
        _emit_metrics(base.metrics, None)
    return 0


def cmd_compare(args) -> int:
    config_path = Path(args.config)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    spec_name = Path(config["spec"])
    for candidate in (spec_name, config_path.parent / spec_name,
                      SPEC_DIR / spec_name):
        if candidate.is_file():
            spec_path = candidate
            break
    else:
        raise SpecError(f"spec '{config['spec']}' not found")
    analyzed = _load(spec_path)
    tr = translate(analyzed, config.get("mode", "dp"))
    result = run_experiment(config, analyzed, tr)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(
        "\n".join(result.csv_lines()) + "\n", encoding="utf-8")
    write_json(out / "summary.json", result.summary)
    print(json.dumps(result.summary["monitors"], indent=2, sort_keys=True))
    return 0


def cmd_check(args) -> int:
    analyzed = _load(args.spec)
    if analyzed.annotations:
        tr = translate(analyzed, args.mode)
        model = read_model(args.model, tr.plain)
        bound = args.bound if args.bound is not None else analyzed.config.bandwidth
        violations = check_scheduled_model(tr.plain, tr.schedule, bound, model)
    else:
        model = read_model(args.model, analyzed)
        violations = verify_model(analyzed, model)
    for v in violations:
        print(violation_json(v))
    if violations:
        return 1
    print("ok", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="activemon",
        description="Active scheduling for stream-based runtime monitors.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate",
                       help="lower an annotated spec to a plain spec")
    t.add_argument("spec")
    t.add_argument("--mode", choices=MODES, default="dp")
    t.add_argument("-o", "--output", help="write the plain spec here")
    t.add_argument("--task-table", help="write the task table JSON here")
    t.set_defaults(func=cmd_translate)

    r = sub.add_parser("run", help="run the active scheduler over a source")
    r.add_argument("spec")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="event trace CSV to replay")
    src.add_argument("--scenario", help="flight scenario JSON to synthesize")
    r.add_argument("--mode", choices=MODES, default="dp")
    r.add_argument("--horizon", type=float, help="run length in seconds")
    r.add_argument("--bound", type=int, help="bandwidth override")
    r.add_argument("--out-dir", help="write triggers/model/plans/metrics here")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="fixed-frequency monitor over a trace")
    b.add_argument("spec")
    b.add_argument("--trace", required=True)
    b.add_argument("--freq", required=True, help="sampling frequency in Hz")
    b.add_argument("--horizon", type=float)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_baseline)

    c = sub.add_parser("compare", help="run the bundled experiment config")
    c.add_argument("--config", required=True)
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("check", help="verify a recorded model against the oracle")
    k.add_argument("spec")
    k.add_argument("--model", required=True)
    k.add_argument("--mode", choices=MODES, default="dp")
    k.add_argument("--bound", type=int)
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
