"""Deterministic synthetic traffic scenes with a gap-acceptance safety oracle.

The camera sits at the roadside, looking along the road. Each lane is a
straight image-space path from a far point (small boxes, near the horizon)
to a near point (large boxes, close to the pedestrian). Vehicles arrive per
lane as a Poisson process and travel the path at a constant per-vehicle speed
in pixels/frame; box size grows linearly with progress toward the near end.

Frames are numbered from 1. Spawn times are continuous, in frame units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._kv import ConfigError, ParseError, read_kv, write_kv

SAFE = 1
UNSAFE = 0

NEAR, FAR = "near", "far"
APPROACHING, RECEDING = "approaching", "receding"

BOXES_HEADER = ["frame_index", "vehicle_id", "x_min", "y_min", "x_max", "y_max"]
LABELS_HEADER = ["frame_index", "label"]
BOXES_FILE = "boxes.csv"
LABELS_FILE = "labels.csv"


@dataclass(frozen=True)
class LaneSpec:
    lane_id: int
    side_of_divider: str
    direction: str
    # centroid coordinates at the far end and at the near end of the lane
    x_band: tuple[float, float]
    y_band: tuple[float, float]
    speed_range: tuple[float, float]
    # full-scale box size, reached at the near end
    width_range: tuple[float, float]
    height_range: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.x_band[1] - self.x_band[0], self.y_band[1] - self.y_band[0])


def default_lanes() -> tuple[LaneSpec, ...]:
    return (
        LaneSpec(0, NEAR, APPROACHING, (140.0, 900.0), (560.0, 900.0), (3.0, 8.0),
                 (150.0, 260.0), (100.0, 170.0)),
        LaneSpec(1, FAR, RECEDING, (1700.0, 1380.0), (470.0, 620.0), (3.0, 7.0),
                 (110.0, 190.0), (80.0, 130.0)),
        LaneSpec(2, FAR, APPROACHING, (1860.0, 1560.0), (560.0, 820.0), (3.0, 7.0),
                 (120.0, 200.0), (90.0, 140.0)),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    frame_width: int = 1920
    frame_height: int = 1080
    fps: float = 30.0
    num_frames: int = 300
    divider_x: float | None = 1300.0
    origin: tuple[float, float] = (960.0, 1080.0)
    crossing_time: float = 4.0
    arrival_rate_per_lane: float = 0.2
    lanes: tuple[LaneSpec, ...] = field(default_factory=default_lanes)
    rng_seed: int = 0
    corridor_half_width: float | None = None
    far_scale: float = 0.35
    min_headway: float = 1.5
    warmup: bool = True

    @property
    def corridor(self) -> tuple[float, float]:
        hw = self.corridor_half_width
        if hw is None:
            hw = 0.15 * self.frame_width
        return (self.origin[0] - hw, self.origin[0] + hw)

    def validate(self) -> None:
        if self.frame_width <= 0:
            raise ConfigError("frame_width", "must be positive")
        if self.frame_height <= 0:
            raise ConfigError("frame_height", "must be positive")
        if self.fps <= 0:
            raise ConfigError("fps", "must be positive")
        if self.num_frames < 0:
            raise ConfigError("num_frames", "must be non-negative")
        if self.crossing_time <= 0:
            raise ConfigError("crossing_time", "must be positive")
        if self.arrival_rate_per_lane < 0:
            raise ConfigError("arrival_rate_per_lane", "must be non-negative")
        if self.min_headway < 0:
            raise ConfigError("min_headway", "must be non-negative")
        if not 0 < self.far_scale <= 1:
            raise ConfigError("far_scale", "must lie in (0, 1]")
        if self.corridor_half_width is not None and self.corridor_half_width < 0:
            raise ConfigError("corridor_half_width", "must be non-negative")
        ox, oy = self.origin
        if not (0 <= ox <= self.frame_width and 0 <= oy <= self.frame_height):
            raise ConfigError("origin", f"{self.origin} lies outside the frame")
        for lane in self.lanes:
            key = f"lane.{lane.lane_id}"
            if lane.side_of_divider not in (NEAR, FAR):
                raise ConfigError(f"{key}.side", f"unknown side {lane.side_of_divider!r}")
            if lane.direction not in (APPROACHING, RECEDING):
                raise ConfigError(f"{key}.direction", f"unknown direction {lane.direction!r}")
            lo, hi = lane.speed_range
            if not 0 < lo <= hi:
                raise ConfigError(f"{key}.speed_range", "need 0 < min <= max")
            for name, (a, b) in (("width_range", lane.width_range), ("height_range", lane.height_range)):
                if not 0 < a <= b:
                    raise ConfigError(f"{key}.{name}", "need 0 < min <= max")
            if not all(0 <= y <= self.frame_height for y in lane.y_band):
                raise ConfigError(f"{key}.y_band", "outside frame height")
            if not all(0 <= x <= self.frame_width for x in lane.x_band):
                raise ConfigError(f"{key}.x_band", "outside frame width")
            if lane.length == 0:
                raise ConfigError(f"{key}.x_band", "lane path has zero length")

    # -- key=value persistence -------------------------------------------

    def to_kv(self) -> dict[str, object]:
        out: dict[str, object] = {
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "fps": repr(float(self.fps)),
            "num_frames": self.num_frames,
            "divider_x": "none" if self.divider_x is None else repr(float(self.divider_x)),
            "origin": _pair_str(self.origin),
            "crossing_time": repr(float(self.crossing_time)),
            "arrival_rate_per_lane": repr(float(self.arrival_rate_per_lane)),
            "rng_seed": self.rng_seed,
            "corridor_half_width": "auto" if self.corridor_half_width is None
            else repr(float(self.corridor_half_width)),
            "far_scale": repr(float(self.far_scale)),
            "min_headway": repr(float(self.min_headway)),
            "warmup": "true" if self.warmup else "false",
        }
        for lane in self.lanes:
            p = f"lane.{lane.lane_id}."
            out[p + "side"] = lane.side_of_divider
            out[p + "direction"] = lane.direction
            out[p + "x_band"] = _pair_str(lane.x_band)
            out[p + "y_band"] = _pair_str(lane.y_band)
            out[p + "speed_range"] = _pair_str(lane.speed_range)
            out[p + "width_range"] = _pair_str(lane.width_range)
            out[p + "height_range"] = _pair_str(lane.height_range)
        return out

    @classmethod
    def from_kv(cls, items: dict[str, str]) -> "ScenarioConfig":
        base = cls()
        kwargs: dict[str, object] = {}
        converters = {
            "frame_width": int, "frame_height": int, "fps": float, "num_frames": int,
            "crossing_time": float, "arrival_rate_per_lane": float, "rng_seed": int,
            "far_scale": float, "min_headway": float,
        }
        lane_items: dict[int, dict[str, str]] = {}
        for key, value in items.items():
            try:
                if key in converters:
                    kwargs[key] = converters[key](value)
                elif key == "divider_x":
                    kwargs[key] = None if value.lower() == "none" else float(value)
                elif key == "corridor_half_width":
                    kwargs[key] = None if value.lower() == "auto" else float(value)
                elif key == "origin":
                    kwargs[key] = _parse_pair(value)
                elif key == "warmup":
                    kwargs[key] = _parse_bool(value)
                elif key.startswith("lane."):
                    _, lane_id, attr = key.split(".", 2)
                    lane_items.setdefault(int(lane_id), {})[attr] = value
                else:
                    raise ConfigError(key, "unknown key")
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(key, f"bad value {value!r} ({exc})") from None
        if lane_items:
            kwargs["lanes"] = tuple(_lane_from_items(i, lane_items[i]) for i in sorted(lane_items))
        cfg = replace(base, **kwargs)
        cfg.validate()
        return cfg


def _pair_str(p) -> str:
    return f"{float(p[0])!r},{float(p[1])!r}"


def _parse_pair(value: str) -> tuple[float, float]:
    parts = [s.strip() for s in value.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return (float(parts[0]), float(parts[1]))


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _lane_from_items(lane_id: int, items: dict[str, str]) -> LaneSpec:
    required = ("side", "direction", "x_band", "y_band", "speed_range", "width_range", "height_range")
    for name in required:
        if name not in items:
            raise ConfigError(f"lane.{lane_id}.{name}", "missing")
    for name in items:
        if name not in required:
            raise ConfigError(f"lane.{lane_id}.{name}", "unknown key")
    try:
        return LaneSpec(
            lane_id=lane_id,
            side_of_divider=items["side"],
            direction=items["direction"],
            x_band=_parse_pair(items["x_band"]),
            y_band=_parse_pair(items["y_band"]),
            speed_range=_parse_pair(items["speed_range"]),
            width_range=_parse_pair(items["width_range"]),
            height_range=_parse_pair(items["height_range"]),
        )
    except ValueError as exc:
        raise ConfigError(f"lane.{lane_id}", str(exc)) from None


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_kv(read_kv(path))


def save_config(config: ScenarioConfig, path) -> None:
    write_kv(path, config.to_kv())


def linear_oracle_config(**overrides) -> ScenarioConfig:
    """Single near-side approaching lane on an undivided road.

    Every vehicle reaches the corridor within ``crossing_time`` of appearing,
    so a frame is safe exactly when no vehicle is visible.
    """
    lane = LaneSpec(0, NEAR, APPROACHING, (200.0, 960.0), (600.0, 900.0), (6.0, 10.0),
                    (150.0, 260.0), (100.0, 170.0))
    cfg = ScenarioConfig(divider_x=None, arrival_rate_per_lane=0.1, lanes=(lane,))
    return replace(cfg, **overrides)


@dataclass(frozen=True)
class Box:
    vehicle_id: int
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def xyxy(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def centroid(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    boxes: tuple[Box, ...]
    truth_label: int | None = None


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth motion of one vehicle along its lane."""

    vehicle_id: int
    lane: LaneSpec
    spawn: float
    speed: float
    width: float
    height: float

    @property
    def near_side(self) -> bool:
        return self.lane.side_of_divider == NEAR

    @property
    def approaching(self) -> bool:
        return self.lane.direction == APPROACHING

    @property
    def duration(self) -> float:
        return self.lane.length / self.speed

    @property
    def end(self) -> float:
        return self.spawn + self.duration

    def progress(self, t):
        """Fraction of the way from the far end to the near end at frame time ``t``."""
        frac = (t - self.spawn) / self.duration
        return frac if self.approaching else 1.0 - frac

    def alive(self, t):
        return (t >= self.spawn) & (t <= self.end)

    def centroid(self, t):
        p = self.progress(t)
        (xf, xn), (yf, yn) = self.lane.x_band, self.lane.y_band
        return xf + (xn - xf) * p, yf + (yn - yf) * p

    def scale(self, t, far_scale: float):
        return far_scale + (1.0 - far_scale) * self.progress(t)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    frames: tuple[FrameRecord, ...]
    trajectories: tuple[Trajectory, ...]

    @property
    def labels(self) -> list[int]:
        return [f.truth_label for f in self.frames]


def _lane_arrivals(lane: LaneSpec, cfg: ScenarioConfig, rng: np.random.Generator):
    """Yield (spawn, speed, width, height) for one lane, in spawn order."""
    rate = cfg.arrival_rate_per_lane / cfg.fps  # vehicles per frame
    if rate == 0:
        return []
    headway = cfg.min_headway * cfg.fps
    t = 0.0
    if cfg.warmup:
        t = -math.ceil(lane.length / lane.speed_range[0])
    out = []
    prev_spawn = prev_end = -math.inf
    while True:
        t += rng.exponential(1.0 / rate)
        if t > cfg.num_frames:
            break
        speed = rng.uniform(*lane.speed_range)
        width = rng.uniform(*lane.width_range)
        height = rng.uniform(*lane.height_range)
        # queue behind the previous vehicle instead of overtaking it
        spawn = max(t, prev_spawn + headway)
        if spawn > cfg.num_frames:
            break
        latest = prev_end + headway
        if spawn + lane.length / speed < latest:
            speed = lane.length / (latest - spawn)
        out.append((spawn, speed, width, height))
        prev_spawn, prev_end = spawn, spawn + lane.length / speed
    return out


def _render_box(traj: Trajectory, t: int, cfg: ScenarioConfig) -> Box | None:
    cx, cy = traj.centroid(t)
    s = traj.scale(t, cfg.far_scale)
    hw, hh = traj.width * s / 2.0, traj.height * s / 2.0
    x0 = min(max(math.floor(cx - hw + 0.5), 0), cfg.frame_width)
    x1 = min(max(math.floor(cx + hw + 0.5), 0), cfg.frame_width)
    y0 = min(max(math.floor(cy - hh + 0.5), 0), cfg.frame_height)
    y1 = min(max(math.floor(cy + hh + 0.5), 0), cfg.frame_height)
    if x0 >= x1 or y0 >= y1:
        return None
    return Box(traj.vehicle_id, x0, y0, x1, y1)


def generate_scenario(config: ScenarioConfig) -> Scenario:
    config.validate()
    seqs = np.random.SeedSequence(config.rng_seed).spawn(len(config.lanes))
    raw = []
    for lane, seq in zip(config.lanes, seqs):
        rng = np.random.default_rng(seq)
        for spawn, speed, w, h in _lane_arrivals(lane, config, rng):
            raw.append((spawn, lane.lane_id, lane, speed, w, h))
    raw.sort(key=lambda r: (r[0], r[1]))
    trajectories = tuple(
        Trajectory(vid, lane, spawn, speed, w, h)
        for vid, (spawn, _, lane, speed, w, h) in enumerate(raw, start=1)
    )

    per_frame: list[list[Box]] = [[] for _ in range(config.num_frames)]
    for traj in trajectories:
        first = max(1, math.ceil(traj.spawn))
        last = min(config.num_frames, math.floor(traj.end))
        for t in range(first, last + 1):
            box = _render_box(traj, t, config)
            if box is not None:
                per_frame[t - 1].append(box)

    frames = tuple(FrameRecord(i + 1, tuple(boxes)) for i, boxes in enumerate(per_frame))
    scenario = Scenario(config, frames, trajectories)
    labels = label_safety(scenario)
    frames = tuple(replace(f, truth_label=lab) for f, lab in zip(frames, labels))
    return replace(scenario, frames=frames)


def corridor_frames(traj: Trajectory, config: ScenarioConfig) -> np.ndarray:
    """Integer frames at which the vehicle is alive with its centroid in the corridor."""
    lo, hi = config.corridor
    t = np.arange(math.ceil(traj.spawn), math.floor(traj.end) + 1, dtype=float)
    x, _ = traj.centroid(t)
    return t[(x >= lo) & (x <= hi)].astype(int)


def label_safety(scenario: Scenario) -> list[int]:
    """Gap-acceptance labels: a frame is unsafe when a near-side approaching
    vehicle already on the road reaches the crossing corridor within
    ``crossing_time`` seconds."""
    cfg = scenario.config
    n = cfg.num_frames
    horizon = cfg.crossing_time * cfg.fps
    unsafe = np.zeros(n + 1, dtype=bool)
    for traj in scenario.trajectories:
        if not (traj.near_side and traj.approaching):
            continue
        hits = corridor_frames(traj, cfg)
        if hits.size == 0:
            continue
        # frames are contiguous since the centroid moves along a line
        start = max(math.ceil(hits[0] - horizon), math.ceil(traj.spawn), 1)
        stop = min(int(hits[-1]), n)
        if start <= stop:
            unsafe[start:stop + 1] = True
    return [UNSAFE if u else SAFE for u in unsafe[1:]]


# -- dataset CSV ------------------------------------------------------------


def export_dataset(scenario: Scenario, path) -> Path:
    """Write ``boxes.csv`` and ``labels.csv`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with (path / BOXES_FILE).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOXES_HEADER)
        for frame in scenario.frames:
            for b in frame.boxes:
                w.writerow([frame.frame_index, b.vehicle_id, b.x_min, b.y_min, b.x_max, b.y_max])
    with (path / LABELS_FILE).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for frame in scenario.frames:
            w.writerow([frame.frame_index, frame.truth_label])
    return path


def _read_int_rows(path: Path, header: list[str]):
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                yield lineno, [int(v) for v in row]
            except ValueError:
                raise ParseError(path, lineno, f"non-integer field in {row}") from None


def import_dataset(path) -> tuple[list[FrameRecord], list[int]]:
    path = Path(path)
    labels: dict[int, int] = {}
    order: list[int] = []
    for lineno, (idx, label) in _read_int_rows(path / LABELS_FILE, LABELS_HEADER):
        if label not in (SAFE, UNSAFE):
            raise ParseError(path / LABELS_FILE, lineno, f"label must be 0 or 1, got {label}")
        if order and idx <= order[-1]:
            raise ParseError(path / LABELS_FILE, lineno, "frame_index not increasing")
        labels[idx] = label
        order.append(idx)
    boxes: dict[int, list[Box]] = {i: [] for i in order}
    for lineno, (idx, vid, x0, y0, x1, y1) in _read_int_rows(path / BOXES_FILE, BOXES_HEADER):
        if idx not in boxes:
            raise ParseError(path / BOXES_FILE, lineno, f"frame {idx} has no label row")
        if not (x0 < x1 and y0 < y1):
            raise ParseError(path / BOXES_FILE, lineno, "degenerate box")
        boxes[idx].append(Box(vid, x0, y0, x1, y1))
    frames = [FrameRecord(i, tuple(boxes[i]), labels[i]) for i in order]
    return frames, [labels[i] for i in order]
