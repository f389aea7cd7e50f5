"""Command-line front end.

    single-anchor simulate --scenario paper-5stage --seed 7 --out runs/s7
    single-anchor track runs/s7/log.csv --mode both --out runs/s7/track
    single-anchor observability --grid "x=-10:10:5,y=-10:10:5,theta=0:3:4,v=1"

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import AnchorPose, EstimationError, EstimatorConfig, InvalidArgumentError, RobotState
from .metrics import ate, summarize, windowed_rmse
from .observability import is_observable
from .pipeline import MODES, run_pipeline_full
from .replay import (
    ParseError,
    atomic_write,
    parse_key_values,
    parse_truth,
    read_sensor_log,
    write_error_series,
    write_pose_track,
    write_sensor_log,
    write_speed_trace,
    write_truth,
)
from .scenarios import SCENARIOS, get_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


def _finite(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


def _parse_anchor(text: str) -> AnchorPose:
    parts = text.split(",")
    try:
        x, y = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"--anchor expects X,Y, got {text!r}") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise UsageError("--anchor must be finite")
    return AnchorPose(x, y)


def _load_config(path: Optional[str], overrides: Sequence[str]) -> tuple[EstimatorConfig, Optional[AnchorPose]]:
    """Config file (``# key: value`` lines) merged with ``--set key=value`` flags."""
    values: dict[str, str] = {}
    anchor = None
    if path:
        with open(path, "rb") as fh:
            values, _ = parse_key_values(fh.read())
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    if "anchor" in values:
        anchor = _parse_anchor(values.pop("anchor"))
    try:
        return EstimatorConfig.from_mapping(values), anchor
    except InvalidArgumentError as exc:
        raise UsageError(f"bad configuration: {exc}") from None


# --- simulate -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        scenario = get_scenario(args.scenario)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    truth, log = scenario.simulate(args.seed)
    os.makedirs(args.out, exist_ok=True)
    files = {
        "log.csv": write_sensor_log(log),
        "truth.csv": write_truth(truth),
    }
    for name, data in files.items():
        atomic_write(os.path.join(args.out, name), data)
    manifest = {
        "command": "simulate",
        "version": __version__,
        "scenario": scenario.name,
        "seed": args.seed,
        "start": [float(v) for v in scenario.start.as_array()],
        "stages": [[s.duration, s.v, s.w] for s in scenario.stages],
        "noise": {k: getattr(log.noise, k) for k in
                  ("sigma_r", "sigma_theta", "sigma_gyro", "sigma_acc", "sigma_mag", "seed")},
        "rates_hz": {"range": scenario.range_rate, "heading": scenario.heading_rate,
                     "imu": scenario.imu_rate},
        "anchor": [float(v) for v in log.anchor],
        "estimator_overrides": dict(scenario.config),
        "files": {name: hashlib.sha256(data).hexdigest() for name, data in files.items()},
    }
    atomic_write(os.path.join(args.out, "manifest.json"), _json_bytes(manifest))
    return EXIT_OK


# --- track ------------------------------------------------------------------------

def cmd_track(args) -> int:
    cfg, cfg_anchor = _load_config(args.config, args.set or [])
    log = read_sensor_log(args.log)
    if cfg_anchor is not None:
        log.anchor = cfg_anchor
    if args.anchor:
        log.anchor = _parse_anchor(args.anchor)
    truth = log.truth
    if args.truth:
        with open(args.truth, "rb") as fh:
            truth = parse_truth(fh.read())

    modes = MODES if args.mode == "both" else (args.mode,)
    os.makedirs(args.out, exist_ok=True)
    metrics: dict[str, dict] = {}
    for mode in modes:
        result = run_pipeline_full(log, cfg, mode)
        atomic_write(os.path.join(args.out, f"pose_{mode}.csv"), write_pose_track(result.track))
        atomic_write(os.path.join(args.out, f"speed_trace_{mode}.csv"),
                     write_speed_trace(result.speed_trace))
        if truth is None:
            continue
        summary = summarize(result.track, truth, window=args.window)
        try:
            summary["ate_rigid_2d"] = ate(result.track, truth, "rigid_2d")
        except InvalidArgumentError:
            summary["ate_rigid_2d"] = None
        summary["counters"] = dict(result.counters)
        metrics[mode] = summary
        series = windowed_rmse(result.track, truth, args.window)
        atomic_write(os.path.join(args.out, f"errors_{mode}.csv"),
                     write_error_series(series.t, series.errors, series.windowed))

    if truth is None:
        print("note: log carries no truth track; metrics skipped", file=sys.stderr)
        return EXIT_OK

    doc = {"config": cfg.as_dict(), "window_s": args.window, "modes": metrics}
    for mode, summary in metrics.items():
        doc[f"rmse_{mode}"] = summary["rmse"]
    atomic_write(os.path.join(args.out, "metrics.json"), _json_bytes(doc))
    if len(modes) == 2:
        rw, rv = metrics["with"]["rmse"], metrics["vanilla"]["rmse"]
        comparison = {
            "rmse_with": rw,
            "rmse_vanilla": rv,
            "ate_with": metrics["with"]["ate"],
            "ate_vanilla": metrics["vanilla"]["ate"],
            "ratio_vanilla_over_with": _finite(rv / rw) if rw > 0 else None,
        }
        atomic_write(os.path.join(args.out, "comparison.json"), _json_bytes(comparison))
    return EXIT_OK


# --- observability ----------------------------------------------------------------

_GRID_AXES = ("x", "y", "theta", "v", "w")


def parse_grid(spec: str) -> dict[str, np.ndarray]:
    """``name=value`` or ``name=start:stop:count`` items, comma separated."""
    axes: dict[str, np.ndarray] = {}
    for item in spec.split(","):
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep or name not in _GRID_AXES or name in axes:
            raise UsageError(f"bad grid item {item!r}; axes are {', '.join(_GRID_AXES)}")
        parts = value.split(":")
        try:
            if len(parts) == 1:
                vals = np.array([float(parts[0])])
            elif len(parts) == 3:
                count = int(parts[2])
                if count < 1 or count > 10_000:
                    raise ValueError
                vals = np.linspace(float(parts[0]), float(parts[1]), count)
            else:
                raise ValueError
        except ValueError:
            raise UsageError(f"bad grid values {value!r}") from None
        if not np.all(np.isfinite(vals)):
            raise UsageError(f"grid values must be finite: {value!r}")
        axes[name] = vals
    missing = [a for a in ("x", "y", "theta", "v") if a not in axes]
    if missing:
        raise UsageError(f"grid is missing axes: {', '.join(missing)}")
    axes.setdefault("w", np.array([0.0]))
    return axes


def observability_grid(axes: dict[str, np.ndarray], include_velocity_rows: bool = True) -> list[dict]:
    cells = []
    for x in axes["x"]:
        for y in axes["y"]:
            for th in axes["theta"]:
                for v in axes["v"]:
                    for w in axes["w"]:
                        state = {"x": float(x), "y": float(y), "theta": float(th),
                                 "v": float(v), "w": float(w)}
                        try:
                            _, report = is_observable(RobotState(x, y, th, v, w),
                                                      include_velocity_rows)
                        except InvalidArgumentError as exc:
                            cells.append({"state": state, "valid": False, "error": str(exc)})
                            continue
                        cell = report.to_json()
                        cell.update(state=state, valid=True)
                        cells.append(cell)
    return cells


def cmd_observability(args) -> int:
    axes = parse_grid(args.grid)
    cells = observability_grid(axes, not args.no_velocity_rows)
    data = _json_bytes(cells)
    if args.out:
        atomic_write(args.out, data)
    else:
        sys.stdout.write(data.decode("utf-8"))
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="single-anchor",
                                     description="Single-anchor UWB tracking with speed estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a sensor log from a named scenario")
    p.add_argument("--scenario", required=True, help=f"one of: {', '.join(sorted(SCENARIOS))}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracker on a sensor log")
    p.add_argument("log", help="sensor log CSV")
    p.add_argument("--mode", choices=(*MODES, "both"), default="both")
    p.add_argument("--config", help="config file of '# key: value' lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable; wins over --config)")
    p.add_argument("--anchor", metavar="X,Y", help="anchor position (wins over log and config)")
    p.add_argument("--truth", help="reference track CSV (defaults to truth rows in the log)")
    p.add_argument("--window", type=float, default=5.0, help="windowed RMSE length [s]")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("observability", help="rank test over a state grid")
    p.add_argument("--grid", required=True,
                   help="e.g. 'x=-10:10:5,y=-10:10:5,theta=0:3.14:4,v=1' (w defaults to 0)")
    p.add_argument("--no-velocity-rows", action="store_true",
                   help="drop the speed and yaw-rate output rows")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_observability)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if getattr(args, "window", 1.0) <= 0:
            raise UsageError("--window must be > 0")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
