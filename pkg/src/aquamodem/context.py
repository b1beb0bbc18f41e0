"""Diver context: sensor frames, abnormality thresholds, and message purposes."""

from __future__ import annotations

import configparser
import csv
import operator
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np


class Role(str, Enum):
    SENDER = "sender"
    REPLY = "reply"


class PurposeTag(str, Enum):
    SAFETY = "safety"
    NAVIGATION = "navigation"
    ENVIRONMENT = "environment"
    EQUIPMENT = "equipment"
    ACKNOWLEDGE = "acknowledge"
    REFUSE = "refuse"
    ASSIST = "assist"
    RESEND = "resend"

    @property
    def role(self) -> Role:
        return Role.SENDER if self in SENDER_PURPOSES else Role.REPLY


SENDER_PURPOSES = (PurposeTag.SAFETY, PurposeTag.NAVIGATION, PurposeTag.ENVIRONMENT, PurposeTag.EQUIPMENT)
REPLY_PURPOSES = (PurposeTag.ACKNOWLEDGE, PurposeTag.REFUSE, PurposeTag.ASSIST, PurposeTag.RESEND)


class InvalidPurposeRole(ValueError):
    pass


@dataclass(frozen=True)
class SensorFrame:
    depth: float  # m
    water_temp: float  # degrees C
    tank_pressure: float  # psi
    heart_rate: float  # bpm
    heading: float  # degrees, [0, 360)
    ndl: float  # minutes
    dive_time: float  # s
    ascent_rate: float  # m/min, positive when rising
    battery: float  # percent

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if not 0 <= self.battery <= 100:
            raise ValueError(f"battery must be in [0, 100], got {self.battery}")
        if not 0 <= self.heading < 360:
            raise ValueError(f"heading must be in [0, 360), got {self.heading}")


SENSOR_FIELDS = tuple(f.name for f in fields(SensorFrame))

UNITS = {
    "depth": "m",
    "water_temp": "degrees c",
    "tank_pressure": "psi",
    "heart_rate": "bpm",
    "heading": "degrees",
    "ndl": "min",
    "dive_time": "s",
    "ascent_rate": "m per min",
    "battery": "percent",
}

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class ThresholdRule:
    comparator: str
    limit: float

    def __post_init__(self):
        if self.comparator not in _COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def violated(self, value: float) -> bool:
        return _COMPARATORS[self.comparator](value, self.limit)

    def __str__(self) -> str:
        return f"{self.comparator} {self.limit:g}"


class ThresholdConfig(dict):
    """Mapping of sensor field name to a single :class:`ThresholdRule`."""

    def __setitem__(self, key, rule):
        if key not in SENSOR_FIELDS:
            raise KeyError(f"{key!r} is not a sensor field")
        super().__setitem__(key, rule)

    @classmethod
    def from_pairs(cls, pairs) -> ThresholdConfig:
        cfg = cls()
        for name, comparator, limit in pairs:
            if name not in SENSOR_FIELDS:
                raise ValueError(f"{name!r} is not a sensor field")
            if name in cfg:
                raise ValueError(f"duplicate rule for {name}")
            cfg[name] = ThresholdRule(comparator, float(limit))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> ThresholdConfig:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=True)
        parser.read_string(Path(path).read_text(encoding="utf-8"))
        pairs = []
        for name, value in parser["thresholds"].items():
            comparator, limit = value.split()
            pairs.append((name, comparator, limit))
        return cls.from_pairs(pairs)

    def to_file(self, path: str | Path) -> None:
        lines = ["[thresholds]"]
        lines += [f"{name} = {self[name]}" for name in SENSOR_FIELDS if name in self]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# Temperature and tank pressure limits follow the published system; the rest
# are common recreational-diving defaults.
DEFAULT_THRESHOLDS = ThresholdConfig.from_pairs(
    [
        ("water_temp", "<", 15),
        ("tank_pressure", "<", 700),
        ("depth", ">", 30),
        ("ascent_rate", ">", 9),
        ("ndl", "<", 5),
        ("heart_rate", ">", 150),
        ("battery", "<", 15),
    ]
)


@dataclass(frozen=True)
class AbnormalReading:
    parameter: str
    value: float
    rule: ThresholdRule


def filter_abnormal(frame: SensorFrame, cfg: ThresholdConfig = DEFAULT_THRESHOLDS) -> list[AbnormalReading]:
    """Readings of ``frame`` that violate their rule, in sensor field order."""
    out = []
    for name in SENSOR_FIELDS:
        rule = cfg.get(name)
        value = getattr(frame, name)
        if rule is not None and rule.violated(value):
            out.append(AbnormalReading(name, value, rule))
    return out


@dataclass(frozen=True)
class ContextRecord:
    purpose: PurposeTag
    abnormal: tuple[AbnormalReading, ...]
    image_ref: str | None = None

    def serialize(self) -> str:
        lines = [f"purpose: {self.purpose.value}"]
        order = {name: i for i, name in enumerate(SENSOR_FIELDS)}
        for r in sorted(self.abnormal, key=lambda r: order[r.parameter]):
            lines.append(f"{r.parameter}: {r.value:g} {UNITS[r.parameter]} (rule {r.rule})")
        if self.image_ref is not None:
            lines.append(f"image: {self.image_ref}")
        return "\n".join(lines) + "\n"


def assemble_context(
    abnormal: list[AbnormalReading],
    purpose: PurposeTag,
    image_ref: str | Path | None = None,
    role: Role | None = None,
) -> ContextRecord:
    if not isinstance(purpose, PurposeTag):
        try:
            purpose = PurposeTag(purpose)
        except ValueError as exc:
            raise InvalidPurposeRole(str(exc)) from None
    if role is not None and purpose.role != Role(role):
        raise InvalidPurposeRole(f"{purpose.value} is not a {Role(role).value} purpose")
    return ContextRecord(purpose, tuple(abnormal), None if image_ref is None else str(image_ref))


# ---------------------------------------------------------------------------
# dive profile simulation

DESCENT_RATE = 15.0  # m/min
ASCENT_RATE = 9.0  # m/min
SAFETY_STOP_DEPTH = 5.0  # m
SAFETY_STOP_TIME = 180.0  # s

# No-decompression limits (min) by depth (m), recreational air table.
_NDL_DEPTHS = np.array([10, 12, 14, 16, 18, 20, 22, 25, 30, 35, 40], dtype=float)
_NDL_MINUTES = np.array([219, 147, 98, 72, 56, 45, 37, 29, 20, 14, 9], dtype=float)


def _ndl_limit(depth: float) -> float:
    if depth < _NDL_DEPTHS[0]:
        return 240.0
    return float(np.interp(depth, _NDL_DEPTHS, _NDL_MINUTES))


def _profile_segments(max_depth: float, duration: float):
    """(start_time, end_time, start_depth, end_depth) for each phase."""
    descent = max_depth / DESCENT_RATE * 60
    ascent = (max_depth - SAFETY_STOP_DEPTH) / ASCENT_RATE * 60
    final = SAFETY_STOP_DEPTH / ASCENT_RATE * 60
    plateau = max(0.0, duration - descent - ascent - SAFETY_STOP_TIME - final)
    phases = [
        (descent, 0.0, max_depth),
        (plateau, max_depth, max_depth),
        (ascent, max_depth, SAFETY_STOP_DEPTH),
        (SAFETY_STOP_TIME, SAFETY_STOP_DEPTH, SAFETY_STOP_DEPTH),
        (final, SAFETY_STOP_DEPTH, 0.0),
    ]
    t = 0.0
    segments = []
    for length, d0, d1 in phases:
        if length > 0:
            segments.append((t, t + length, d0, d1))
            t += length
    return segments


def _depth_and_rate(t: float, segments) -> tuple[float, float]:
    for t0, t1, d0, d1 in segments:
        if t < t1:
            rate = (d1 - d0) / (t1 - t0)
            return d0 + rate * (t - t0), -rate * 60
    return segments[-1][3], 0.0


def simulate_dive_profile(
    duration: float, seed: int = 0, interval: float = 1.0, max_depth: float | None = None
) -> list[SensorFrame]:
    """Synthetic recreational dive sampled every ``interval`` seconds.

    Phases run descent, bottom plateau, ascent, a three-minute safety stop at
    5 m and a final ascent to the surface. When ``duration`` is too short for
    the full profile the phases are simply cut off at ``duration``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    if max_depth is None:
        max_depth = float(rng.uniform(12.0, 25.0))
    segments = _profile_segments(max_depth, duration)

    surface_temp = rng.uniform(16.0, 26.0)
    pressure = rng.uniform(2900.0, 3100.0)
    sac = rng.uniform(20.0, 35.0)  # psi/min at the surface
    heading = rng.uniform(0.0, 360.0)
    battery = rng.uniform(60.0, 100.0)
    resting_hr = rng.uniform(60.0, 80.0)
    loading = 0.0

    # The last sample lands exactly on ``duration`` so a full profile ends at the surface.
    times = np.arange(0.0, duration, interval)
    times = np.append(times, duration) if duration - times[-1] > 1e-9 else times
    frames = []
    for i, t in enumerate(times):
        depth, ascent_rate = _depth_and_rate(t, segments)
        depth = max(depth, 0.0)
        if i:
            dt = t - times[i - 1]
            pressure = max(0.0, pressure - sac * (1 + depth / 10) * dt / 60 * rng.uniform(0.8, 1.2))
            loading += dt / 60 / _ndl_limit(depth) if depth >= 6 else -dt / 60 / 240
            loading = min(max(loading, 0.0), 1.0)
            heading = (heading + rng.normal(0, 4.0)) % 360.0
            battery = max(0.0, battery - 0.01 * dt)
        frames.append(
            SensorFrame(
                depth=round(depth, 2),
                water_temp=round(surface_temp - 0.3 * depth + rng.normal(0, 0.1), 2),
                tank_pressure=round(pressure, 1),
                heart_rate=round(resting_hr + 1.5 * abs(ascent_rate) + 0.5 * depth + rng.normal(0, 2.0), 1),
                heading=round(heading, 1) % 360.0,
                ndl=round((1 - loading) * _ndl_limit(depth), 1),
                dive_time=float(t),
                ascent_rate=round(ascent_rate, 2),
                battery=round(battery, 2),
            )
        )
    return frames


def write_frames_csv(frames: list[SensorFrame], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SENSOR_FIELDS)
        writer.writeheader()
        for f in frames:
            writer.writerow(asdict(f))


def read_frames_csv(path: str | Path) -> list[SensorFrame]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SensorFrame(**{k: float(v) for k, v in row.items()}) for row in csv.DictReader(fh)]
