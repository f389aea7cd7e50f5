"""CSV formats for sensor logs, truth tracks, pose tracks and metric series.

All files share a ``# key: value`` comment header followed by a column
line and data rows. Numbers are written with six decimals, so a log written
by :func:`write_sensor_log` parses back and re-serializes byte for byte.
See FORMAT.md for the grammar.

Parsers never raise anything but :class:`ParseError` on bad input, and
every ParseError carries the 1-based line number it refers to.
"""

from __future__ import annotations

import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import (
    AnchorPose,
    EstimationError,
    HeadingSample,
    ImuSample,
    NoiseConfig,
    PoseTrack,
    RangeSample,
    StageProfile,
)
from .pipeline import SpeedTraceRow
from .simulator import SensorLog, TruthTrack

FORMAT_VERSION = "1"
UNITS = "SI"
KINDS = ("range", "heading", "imu", "truth")
LOG_COLUMNS = "kind,t,values"
TRUTH_COLUMNS = "t,x,y,theta,v,w"
POSE_COLUMNS = "t,x,y,theta,v,w,sigma_x,sigma_y,speed_corrected"
SPEED_COLUMNS = "t,raw_speed,smoothed_speed,blended"
SERIES_COLUMNS = "t,error_m,windowed_rmse_m"

_N_VALUES = {"range": 1, "heading": 1, "imu": 9, "truth": 5}
_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?\Z")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")
_NOISE_KEYS = ("sigma_r", "sigma_theta", "sigma_gyro", "sigma_acc", "sigma_mag", "seed")


class ParseError(EstimationError, ValueError):
    """Malformed input; ``line`` is 1-based (0 when no line applies)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


@dataclass
class LogHeader:
    format_version: str = FORMAT_VERSION
    units: str = UNITS
    anchor: AnchorPose = AnchorPose()
    streams: tuple[str, ...] = ()
    noise: Optional[NoiseConfig] = None
    stages: list[StageProfile] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)


def fmt(x: float) -> str:
    """Canonical number formatting: six decimals, no negative zero."""
    s = f"{float(x):.6f}"
    return "0.000000" if s == "-0.000000" else s


# --- low-level line handling ----------------------------------------------

def _lines(data: bytes | str) -> Iterable[tuple[int, str]]:
    if isinstance(data, str):
        data = data.encode("utf-8", errors="surrogatepass")
    raw = data.split(b"\n")
    if raw and raw[-1] == b"":
        raw.pop()
    for no, chunk in enumerate(raw, start=1):
        if chunk.endswith(b"\r"):
            chunk = chunk[:-1]
        try:
            text = chunk.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(no, f"invalid UTF-8 at byte {exc.start}") from None
        yield no, text


def _number(text: str, no: int, what: str) -> float:
    text = text.strip()
    if not _NUMBER.match(text):
        raise ParseError(no, f"{what}: not a finite decimal number: {text[:40]!r}")
    val = float(text)
    if not math.isfinite(val):
        raise ParseError(no, f"{what}: value out of range")
    return val


def _split_header(no: int, line: str) -> tuple[str, str]:
    body = line[1:].strip()
    key, sep, value = body.partition(":")
    key = key.strip()
    if not sep or not _KEY.match(key):
        raise ParseError(no, "header lines must read '# key: value'")
    return key, value.strip()


def parse_key_values(data: bytes | str) -> tuple[dict[str, str], dict[str, int]]:
    """Parse a block of ``# key: value`` lines (blank lines allowed).

    Returns the values and the line number of every key. This is also the
    dialect of CLI config files.
    """
    values: dict[str, str] = {}
    where: dict[str, int] = {}
    for no, line in _lines(data):
        if not line.strip():
            continue
        if not line.startswith("#"):
            raise ParseError(no, "expected '# key: value'")
        key, value = _split_header(no, line)
        if key in values:
            raise ParseError(no, f"duplicate key {key!r}")
        values[key] = value
        where[key] = no
    return values, where


def _read_header(lines: list[tuple[int, str]], columns: str) -> tuple[dict[str, str], dict[str, int], int]:
    """Consume the comment header and the column line; return index of first row."""
    values: dict[str, str] = {}
    where: dict[str, int] = {}
    i = 0
    while i < len(lines) and lines[i][1].startswith("#"):
        no, line = lines[i]
        key, value = _split_header(no, line)
        if key in values:
            raise ParseError(no, f"duplicate header key {key!r}")
        values[key] = value
        where[key] = no
        i += 1
    if "format_version" not in values:
        raise ParseError(lines[i][0] if i < len(lines) else max(len(lines), 1),
                         "missing format_version header")
    if values["format_version"] != FORMAT_VERSION:
        raise ParseError(where["format_version"],
                         f"unsupported format_version {values['format_version'][:20]!r}")
    if values.get("units") != UNITS:
        raise ParseError(where.get("units", where["format_version"]),
                         "units must be declared as SI")
    if i >= len(lines):
        raise ParseError(lines[-1][0] + 1 if lines else 1, f"missing column line {columns!r}")
    no, line = lines[i]
    if line != columns:
        raise ParseError(no, f"expected column line {columns!r}")
    return values, where, i + 1


def _parse_anchor(value: str, no: int) -> AnchorPose:
    parts = value.split(",")
    if len(parts) != 2:
        raise ParseError(no, "anchor must be 'x,y'")
    return AnchorPose(_number(parts[0], no, "anchor x"), _number(parts[1], no, "anchor y"))


def _parse_noise(value: str, no: int) -> NoiseConfig:
    kv: dict[str, float | int] = {}
    for item in value.split(";"):
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or key not in _NOISE_KEYS or key in kv:
            raise ParseError(no, f"bad noise entry {item[:40]!r}")
        if key == "seed":
            raw = raw.strip()
            if not re.fullmatch(r"\d{1,18}", raw):
                raise ParseError(no, "noise seed must be a non-negative integer")
            kv[key] = int(raw)
        else:
            kv[key] = _number(raw, no, f"noise {key}")
            if kv[key] < 0:
                raise ParseError(no, f"noise {key} must be >= 0")
    try:
        return NoiseConfig(**kv)
    except (EstimationError, ValueError) as exc:
        raise ParseError(no, f"bad noise header: {exc}") from None


def _parse_stages(value: str, no: int) -> list[StageProfile]:
    if not value:
        return []
    out = []
    for item in value.split(";"):
        parts = item.split(":")
        if len(parts) != 3:
            raise ParseError(no, "stages must be 'duration:v:w;...'")
        d, v, w = (_number(p, no, "stage field") for p in parts)
        if not d > 0:
            raise ParseError(no, "stage duration must be > 0")
        out.append(StageProfile(d, v, w))
    return out


def _header_from(values: dict[str, str], where: dict[str, int]) -> LogHeader:
    head = LogHeader()
    for key, value in values.items():
        no = where[key]
        if key in ("format_version", "units"):
            continue
        if key == "anchor":
            head.anchor = _parse_anchor(value, no)
        elif key == "streams":
            kinds = tuple(k for k in value.split(",")) if value else ()
            bad = [k for k in kinds if k not in KINDS]
            if bad or len(set(kinds)) != len(kinds):
                raise ParseError(no, f"bad streams declaration {value[:60]!r}")
            head.streams = kinds
        elif key == "noise":
            head.noise = _parse_noise(value, no)
        elif key == "stages":
            head.stages = _parse_stages(value, no)
        elif key.startswith("meta."):
            head.meta[key[5:]] = value
        else:
            raise ParseError(no, f"unknown header key {key!r}")
    return head


# --- sensor logs ------------------------------------------------------------

def parse_sensor_log(data: bytes | str) -> SensorLog:
    """Parse a mixed-stream sensor log; rows are split by their ``kind``."""
    lines = list(_lines(data))
    if not lines:
        raise ParseError(1, "empty file")
    values, where, start = _read_header(lines, LOG_COLUMNS)
    head = _header_from(values, where)

    rows: dict[str, list] = {k: [] for k in KINDS}
    last_t: dict[str, float] = {}
    for no, line in lines[start:]:
        fields_ = line.split(",")
        kind = fields_[0]
        if kind not in _N_VALUES:
            raise ParseError(no, f"unknown row kind {kind[:20]!r}")
        if head.streams and kind not in head.streams:
            raise ParseError(no, f"row kind {kind!r} not declared in streams header")
        if len(fields_) != 2 + _N_VALUES[kind]:
            raise ParseError(no, f"{kind} rows need {2 + _N_VALUES[kind]} fields, got {len(fields_)}")
        t = _number(fields_[1], no, "timestamp")
        if t < 0:
            raise ParseError(no, "timestamp must be >= 0")
        if kind in last_t and not t > last_t[kind]:
            raise ParseError(no, f"{kind} timestamp {fields_[1]} does not increase")
        last_t[kind] = t
        vals = [_number(f, no, kind) for f in fields_[2:]]
        if kind == "range":
            if vals[0] < 0:
                raise ParseError(no, "range must be >= 0")
            rows[kind].append(RangeSample(t, vals[0]))
        elif kind == "heading":
            rows[kind].append(HeadingSample(t, vals[0]))
        elif kind == "imu":
            rows[kind].append(ImuSample(t, tuple(vals[0:3]), tuple(vals[3:6]), tuple(vals[6:9])))
        else:
            rows[kind].append([t, *vals])

    truth = None
    if rows["truth"]:
        arr = np.asarray(rows["truth"], dtype=float)
        truth = TruthTrack(arr[:, 0], arr[:, 1:])
    return SensorLog(ranges=rows["range"], headings=rows["heading"], imu=rows["imu"],
                     truth=truth, anchor=head.anchor, noise=head.noise,
                     stages=head.stages, meta=head.meta)


def _check_meta(meta: dict[str, str]) -> None:
    for key, value in meta.items():
        if not _KEY.match(key) or "\n" in value or "\r" in value or value != value.strip():
            raise ValueError(f"meta entry {key!r} cannot be written to a header line")


def write_sensor_log(log: SensorLog, include_truth: bool = True) -> bytes:
    """Serialize ``log`` canonically (header, column line, rows by kind then time)."""
    _check_meta(log.meta)
    streams = [k for k, rows in (("range", log.ranges), ("heading", log.headings),
                                 ("imu", log.imu)) if rows]
    if include_truth and log.truth is not None and len(log.truth):
        streams.append("truth")
    out = [
        f"# format_version: {FORMAT_VERSION}",
        f"# units: {UNITS}",
        f"# anchor: {fmt(log.anchor[0])},{fmt(log.anchor[1])}",
        f"# streams: {','.join(streams)}",
    ]
    if log.noise is not None:
        n = log.noise
        out.append(f"# noise: sigma_r={fmt(n.sigma_r)};sigma_theta={fmt(n.sigma_theta)};"
                   f"sigma_gyro={fmt(n.sigma_gyro)};sigma_acc={fmt(n.sigma_acc)};"
                   f"sigma_mag={fmt(n.sigma_mag)};seed={int(n.seed)}")
    if log.stages:
        out.append("# stages: " + ";".join(f"{fmt(s.duration)}:{fmt(s.v)}:{fmt(s.w)}"
                                          for s in log.stages))
    for key in sorted(log.meta):
        out.append(f"# meta.{key}: {log.meta[key]}")
    out.append(LOG_COLUMNS)
    out.extend(f"range,{fmt(s.t)},{fmt(s.r)}" for s in log.ranges)
    out.extend(f"heading,{fmt(s.t)},{fmt(s.theta)}" for s in log.headings)
    out.extend("imu," + ",".join(fmt(v) for v in (s.t, *s.acc, *s.gyro, *s.mag)) for s in log.imu)
    if "truth" in streams:
        out.extend("truth," + ",".join(fmt(v) for v in (t, *row))
                   for t, row in zip(log.truth.t, log.truth.states))
    return ("\n".join(out) + "\n").encode("utf-8")


# --- single-schema tables -----------------------------------------------------

def _table_header(columns: str, extra: Optional[dict[str, str]] = None) -> list[str]:
    out = [f"# format_version: {FORMAT_VERSION}", f"# units: {UNITS}"]
    for key in sorted(extra or {}):
        out.append(f"# {key}: {extra[key]}")
    out.append(columns)
    return out


def _parse_table(data: bytes | str, columns: str) -> tuple[dict[str, str], list[tuple[int, list[str]]]]:
    lines = list(_lines(data))
    if not lines:
        raise ParseError(1, "empty file")
    values, _, start = _read_header(lines, columns)
    width = columns.count(",") + 1
    rows = []
    prev = -math.inf
    for no, line in lines[start:]:
        parts = line.split(",")
        if len(parts) != width:
            raise ParseError(no, f"expected {width} fields, got {len(parts)}")
        t = _number(parts[0], no, "timestamp")
        if not t > prev:
            raise ParseError(no, "timestamps must strictly increase")
        prev = t
        rows.append((no, parts))
    return values, rows


def write_truth(truth: TruthTrack) -> bytes:
    out = _table_header(TRUTH_COLUMNS)
    out.extend(",".join(fmt(v) for v in (t, *row)) for t, row in zip(truth.t, truth.states))
    return ("\n".join(out) + "\n").encode("utf-8")


def parse_truth(data: bytes | str) -> TruthTrack:
    _, rows = _parse_table(data, TRUTH_COLUMNS)
    arr = np.array([[_number(p, no, "truth field") for p in parts] for no, parts in rows],
                   dtype=float).reshape(-1, 6)
    return TruthTrack(arr[:, 0], arr[:, 1:])


def write_pose_track(track: PoseTrack) -> bytes:
    out = _table_header(POSE_COLUMNS)
    sig = np.sqrt(np.maximum(track.cov_diag[:, :2], 0.0))
    for t, s, (sx, sy), flag in zip(track.t, track.states, sig, track.speed_corrected):
        out.append(",".join([fmt(t), *(fmt(v) for v in s), fmt(sx), fmt(sy),
                             "1" if flag else "0"]))
    return ("\n".join(out) + "\n").encode("utf-8")


def parse_pose_track(data: bytes | str) -> PoseTrack:
    _, rows = _parse_table(data, POSE_COLUMNS)
    t, states, cov, flags = [], [], [], []
    for no, parts in rows:
        vals = [_number(p, no, "pose field") for p in parts[:8]]
        if parts[8] not in ("0", "1"):
            raise ParseError(no, "speed_corrected must be 0 or 1")
        if vals[6] < 0 or vals[7] < 0:
            raise ParseError(no, "standard deviations must be >= 0")
        t.append(vals[0])
        states.append(vals[1:6])
        cov.append([vals[6] ** 2, vals[7] ** 2, math.nan, math.nan, math.nan])
        flags.append(parts[8] == "1")
    n = len(t)
    return PoseTrack(np.asarray(t, dtype=float), np.asarray(states, dtype=float).reshape(n, 5),
                     np.asarray(cov, dtype=float).reshape(n, 5), np.asarray(flags, dtype=bool))


def _fmt_or_nan(x: float) -> str:
    return "nan" if x is None or not math.isfinite(x) else fmt(x)


def write_speed_trace(rows: list[SpeedTraceRow]) -> bytes:
    out = _table_header(SPEED_COLUMNS)
    out.extend(f"{fmt(r.t)},{_fmt_or_nan(r.raw_speed)},{_fmt_or_nan(r.smoothed_speed)},"
               f"{int(bool(r.blended))}" for r in rows)
    return ("\n".join(out) + "\n").encode("utf-8")


def write_error_series(t, errors, windowed) -> bytes:
    """Per-sample error and trailing-window RMSE; ``windowed`` may be shorter (nan-filled)."""
    t = np.asarray(t, dtype=float)
    win = np.full(t.shape, math.nan)
    windowed = np.asarray(windowed, dtype=float)
    if windowed.size:
        win[t.size - windowed.size:] = windowed
    out = _table_header(SERIES_COLUMNS)
    out.extend(f"{fmt(a)},{fmt(b)},{_fmt_or_nan(c)}" for a, b, c in zip(t, errors, win))
    return ("\n".join(out) + "\n").encode("utf-8")


# --- files ---------------------------------------------------------------------

def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_sensor_log(path: str | os.PathLike) -> SensorLog:
    with open(path, "rb") as fh:
        return parse_sensor_log(fh.read())
