"""Command-line surface: simulate, detect, calibrate, theory, bench, xcorr.

Every subcommand accepts --seed, --out, and --config. A config file holds
"key = value" lines using the long option names; flags given on the command
line override it. Exit codes: 0 success, 2 usage error (bad flags, values, or
config keys), 3 validity failure (parameters outside a formula's domain,
calibration failure, malformed data files).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

from .detect import EXACT, METHODS, DetectorConfig, run_detector
from .graph_model import (
    CONVENTIONS,
    SYMMETRIC,
    StreamScenario,
    assignment_from_sizes,
    build_indicator,
    iter_stream,
)
from .io import (
    StreamFormatError,
    parse_config,
    read_sensor_csv,
    read_stream,
    write_oc,
    write_report,
    write_stream,
    write_trace,
    xcorr_stream,
)
from .montecarlo import CalibrationError, McPlan, calibrate_threshold, oc_curve
from .theory import ValidityError, theory_report


class UsageError(Exception):
    """Bad flag or config combination; maps to exit code 2."""


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _sizes(text: str) -> tuple[int, ...]:
    vals = tuple(int(p) for p in text.split(",") if p.strip())
    if not vals:
        raise ValueError("expected a comma-separated list of community sizes")
    return vals


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(p) for p in text.split(",") if p.strip())
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


def _tau(text: str) -> int | None:
    return None if text == "never" else int(text)


def _method(text: str) -> str:
    if text not in METHODS:
        raise ValueError(f"unknown method {text!r}; choose from {', '.join(METHODS)}")
    return text


def _convention(text: str) -> str:
    if text not in CONVENTIONS:
        raise ValueError(
            f"unknown convention {text!r}; choose from {', '.join(CONVENTIONS)}"
        )
    return text


@dataclass(frozen=True)
class _Opt:
    name: str
    convert: object = None
    default: object = None
    required: bool = False
    positional: bool = False
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


_SEED = _Opt("seed", _int, default=0, help="master seed (default 0)")
_OUT = _Opt("out", help="output path (default: stdout)")

_SCENARIO_OPTS = (
    _Opt("sizes", _sizes, required=True, help="community sizes, e.g. 12,6"),
    _Opt("nodes", _int, help="total node count (default: sum of sizes)"),
    _Opt("sigma", _float, default=1.0, help="noise level (default 1.0)"),
    _Opt(
        "convention",
        _convention,
        default=SYMMETRIC,
        help="edge sampling convention: symmetric or iid-full (default symmetric)",
    ),
)

_DETECTOR_OPTS = (
    _Opt("method", _method, required=True, help="exact, spectral, or top1"),
    _Opt("m", _int, help="subspace dimension (spectral method)"),
    _Opt("window", _int, help="window length w (spectral and top1 methods)"),
    _Opt("d", _float, help="drift constant (default m/2)"),
)

_MC_OPTS = (
    _Opt("reps", _int, default=500, help="Monte Carlo replications (default 500)"),
    _Opt("cap", _int, help="max steps per replication (default 20x the target)"),
    _Opt("rel-tol", _float, default=0.1, help="calibration tolerance (default 0.1)"),
    _Opt("workers", _int, default=1, help="worker processes (default 1)"),
)

_SIMULATE_OPTS = _SCENARIO_OPTS + (
    _Opt("tau", _tau, help='change point; integer or "never" (default never)'),
    _Opt("horizon", _int, required=True, help="number of snapshots to generate"),
    _SEED,
    _OUT,
)

_DETECT_OPTS = (
    _Opt("input", positional=True, required=True, help="NDJSON stream file"),
    *_DETECTOR_OPTS,
    _Opt(
        "b",
        _float,
        default=math.log(100.0),
        help="alarm threshold (default ln(100))",
    ),
    _Opt("sizes", _sizes, help="community sizes (exact method only)"),
    _Opt("nodes", _int, help="total node count (exact method only)"),
    _SEED,
    _OUT,
)

_CALIBRATE_OPTS = (
    _Opt("target", _float, required=True, help="target average run length"),
    *_SCENARIO_OPTS,
    *_DETECTOR_OPTS,
    *_MC_OPTS,
    _SEED,
    _OUT,
)

_THEORY_OPTS = (
    _Opt("sizes", _sizes, required=True, help="community sizes, e.g. 12,6"),
    _Opt("nodes", _int, help="total node count (default: sum of sizes)"),
    _Opt("sigma", _float, default=1.0, help="noise level (default 1.0)"),
    _Opt("gamma", _float, required=True, help="target average run length"),
    _Opt("window", _int, help="window length (default: rounded optimal)"),
    _SEED,
    _OUT,
)

_BENCH_OPTS = (
    _Opt("gammas", _floats, required=True, help="ascending target ARLs, e.g. 50,100,200"),
    *_SCENARIO_OPTS,
    *_DETECTOR_OPTS,
    *_MC_OPTS,
    _SEED,
    _OUT,
)

_XCORR_OPTS = (
    _Opt("input", positional=True, required=True, help="sensor CSV file"),
    _Opt("segment", _int, required=True, help="samples per correlation segment"),
    _SEED,
    _OUT,
)


def _add_options(sp: argparse.ArgumentParser, opts) -> None:
    for o in opts:
        if o.positional:
            sp.add_argument(o.name, nargs="?", default=None, help=o.help)
        elif o.convert is None:
            sp.add_argument(f"--{o.name}", dest=o.dest, default=None, help=o.help)
        else:
            sp.add_argument(
                f"--{o.name}", dest=o.dest, type=o.convert, default=None, help=o.help
            )
    sp.add_argument(
        "--config",
        default=None,
        help='file of "key = value" lines; command-line flags override it',
    )


def _resolve(ns: argparse.Namespace, opts) -> dict:
    cfg = parse_config(ns.config) if ns.config else {}
    known = {o.name for o in opts}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    values = {}
    for o in opts:
        value = getattr(ns, o.dest)
        if value is None and o.name in cfg:
            try:
                value = o.convert(cfg[o.name]) if o.convert else cfg[o.name]
            except ValueError as err:
                raise UsageError(f"config key {o.name!r}: {err}") from None
        if value is None:
            if o.required:
                what = o.name if o.positional else f"--{o.name}"
                raise UsageError(f"missing required {what}")
            value = o.default
        values[o.dest] = value
    return values


def _out_or_stdout(values: dict):
    return values["out"] if values["out"] else sys.stdout


def _build_scenario(values: dict, tau, horizon: int) -> StreamScenario:
    assignment = assignment_from_sizes(values["sizes"], n=values["nodes"])
    return StreamScenario(
        assignment=assignment,
        sigma=values["sigma"],
        tau=tau,
        horizon=horizon,
        seed=values["seed"],
        convention=values["convention"],
    )


def _build_detector(values: dict, b: float) -> DetectorConfig:
    a = None
    if values["method"] == EXACT:
        if values["sizes"] is None:
            raise UsageError(
                "the exact method needs --sizes (and optionally --nodes) "
                "to build the indicator matrix"
            )
        a = build_indicator(assignment_from_sizes(values["sizes"], n=values["nodes"]))
    return DetectorConfig(
        method=values["method"],
        b=b,
        m=values["m"],
        w=values["window"],
        d=values["d"],
        A=a,
    )


def _cmd_simulate(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _SIMULATE_OPTS)
    scenario = _build_scenario(v, tau=v["tau"], horizon=v["horizon"])
    write_stream(iter_stream(scenario), _out_or_stdout(v))
    return 0


def _cmd_detect(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _DETECT_OPTS)
    snapshots = read_stream(v["input"])
    detector = _build_detector(v, b=v["b"])
    result = run_detector(snapshots, detector)
    write_trace(result, _out_or_stdout(v))
    if result.stop_time is not None:
        print(f"alarm at t={result.stop_time}", file=sys.stderr)
    else:
        print(f"no alarm in {len(snapshots)} snapshots", file=sys.stderr)
    return 0


def _cmd_calibrate(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _CALIBRATE_OPTS)
    target = v["target"]
    cap = v["cap"] if v["cap"] is not None else max(10, math.ceil(20 * target))
    scenario = _build_scenario(v, tau=None, horizon=cap)
    detector = _build_detector(v, b=max(math.log(max(target, 2.0)), 0.1))
    plan = McPlan(
        scenario=scenario,
        detector=detector,
        replications=v["reps"],
        cap=cap,
        master_seed=v["seed"],
    )
    b = calibrate_threshold(plan, target, v["rel_tol"], v["workers"])
    write_report(
        {
            "target_gamma": target,
            "b": b,
            "method": v["method"],
            "replications": v["reps"],
            "cap": cap,
        },
        _out_or_stdout(v),
    )
    return 0


def _cmd_theory(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _THEORY_OPTS)
    report = theory_report(
        v["sizes"], v["sigma"], v["gamma"], window=v["window"], n=v["nodes"]
    )
    write_report(report, _out_or_stdout(v))
    return 0


def _cmd_bench(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _BENCH_OPTS)
    gammas = v["gammas"]
    cap = v["cap"] if v["cap"] is not None else max(10, math.ceil(20 * max(gammas)))
    scenario = _build_scenario(v, tau=None, horizon=cap)
    detector = _build_detector(v, b=max(math.log(max(gammas)), 0.1))
    plan = McPlan(
        scenario=scenario,
        detector=detector,
        replications=v["reps"],
        cap=cap,
        master_seed=v["seed"],
    )
    rows = oc_curve(plan, gammas, v["rel_tol"], v["workers"])
    write_oc(rows, _out_or_stdout(v))
    return 0


def _cmd_xcorr(ns: argparse.Namespace) -> int:
    v = _resolve(ns, _XCORR_OPTS)
    series = read_sensor_csv(v["input"], v["segment"])
    write_stream(xcorr_stream(series), _out_or_stdout(v))
    return 0


_COMMANDS = (
    ("simulate", _cmd_simulate, _SIMULATE_OPTS, "generate a synthetic snapshot stream (NDJSON)"),
    ("detect", _cmd_detect, _DETECT_OPTS, "run a detector over a stream file, emit a trace CSV"),
    ("calibrate", _cmd_calibrate, _CALIBRATE_OPTS, "find the threshold matching a target average run length"),
    ("theory", _cmd_theory, _THEORY_OPTS, "closed-form design report as JSON"),
    ("bench", _cmd_bench, _BENCH_OPTS, "operating-characteristic curve as CSV"),
    ("xcorr", _cmd_xcorr, _XCORR_OPTS, "turn a sensor CSV into a correlation-graph stream"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-cusum",
        description="Online detection of emerging communities in dynamic weighted graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, func, opts, help_text in _COMMANDS:
        sp = sub.add_parser(name, help=help_text, description=help_text)
        _add_options(sp, opts)
        sp.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2
    try:
        return ns.func(ns)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValidityError, CalibrationError, StreamFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
