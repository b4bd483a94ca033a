"""Greedy IoU track-by-detection, per-track speed/direction and divider filtering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

from ._kv import ConfigError, ParseError

APPROACHING, RECEDING, STATIONARY = "approaching", "receding", "stationary"
DIRECTION_CODES = {APPROACHING: "A", RECEDING: "R", STATIONARY: "S"}
_CODE_TO_DIRECTION = {v: k for k, v in DIRECTION_CODES.items()}

TRACKS_HEADER = ["track_id", "frame_index", "x_min", "y_min", "x_max", "y_max", "speed", "direction"]


class UndefinedMotionError(ValueError):
    """Speed or direction requested for a track with fewer than 2 observations."""


@dataclass(frozen=True)
class TrackerConfig:
    iou_match_threshold: float = 0.3
    max_frames_lost: int = 5
    speed_window: int = 5
    stationary_speed_epsilon: float = 0.5

    def validate(self) -> None:
        if not 0 <= self.iou_match_threshold <= 1:
            raise ConfigError("iou_match_threshold", "must lie in [0, 1]")
        if self.max_frames_lost < 0:
            raise ConfigError("max_frames_lost", "must be non-negative")
        if self.speed_window < 2:
            raise ConfigError("speed_window", "must be at least 2")
        if self.stationary_speed_epsilon < 0:
            raise ConfigError("stationary_speed_epsilon", "must be non-negative")


class Observation(NamedTuple):
    frame_index: int
    box: tuple[float, float, float, float]
    # position of the box in its frame's detection list
    source_index: int = -1


@dataclass(frozen=True)
class Track:
    track_id: int
    observations: tuple[Observation, ...]
    speed: float = 0.0
    direction: str = APPROACHING


@dataclass(frozen=True)
class TrackedBox:
    """One detection annotated with the motion of its track up to that frame."""

    track_id: int
    frame_index: int
    box: tuple[float, float, float, float]
    speed: float
    direction: str

    @property
    def centroid(self) -> tuple[float, float]:
        return centroid(self.box)


def centroid(box) -> tuple[float, float]:
    x0, y0, x1, y1 = box
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _frame_boxes(frame) -> tuple[int, list[tuple]]:
    if hasattr(frame, "boxes"):
        return frame.frame_index, [b.xyxy if hasattr(b, "xyxy") else tuple(b) for b in frame.boxes]
    idx, boxes = frame
    return idx, [tuple(b) for b in boxes]


def associate(frames, config: TrackerConfig | None = None,
              origin: tuple[float, float] = (960.0, 1080.0)) -> list[Track]:
    """Link per-frame detections into tracks.

    ``frames`` holds FrameRecords or ``(frame_index, boxes)`` pairs; any
    vehicle ids on the boxes are ignored. Pairs are matched greedily by IoU,
    highest first, ties going to the lower box index and then the older track.
    """
    config = config or TrackerConfig()
    config.validate()
    open_tracks: list[list[Observation]] = []
    closed: list[list[Observation]] = []
    for frame in frames:
        fidx, boxes = _frame_boxes(frame)
        still_open = []
        for obs in open_tracks:
            if fidx - obs[-1].frame_index - 1 > config.max_frames_lost:
                closed.append(obs)
            else:
                still_open.append(obs)
        open_tracks = still_open

        pairs = []
        for ti, obs in enumerate(open_tracks):
            last = obs[-1].box
            for bi, box in enumerate(boxes):
                v = iou(last, box)
                if v >= config.iou_match_threshold:
                    pairs.append((-v, bi, ti))
        pairs.sort()
        used_tracks: set[int] = set()
        used_boxes: set[int] = set()
        for _, bi, ti in pairs:
            if bi in used_boxes or ti in used_tracks:
                continue
            used_boxes.add(bi)
            used_tracks.add(ti)
            open_tracks[ti].append(Observation(fidx, boxes[bi], bi))
        for bi, box in enumerate(boxes):
            if bi not in used_boxes:
                open_tracks.append([Observation(fidx, box, bi)])

    all_obs = closed + open_tracks
    # track ids follow the first appearance, then detection order
    all_obs.sort(key=lambda o: (o[0].frame_index, o[0].source_index))
    tracks = []
    for tid, obs in enumerate(all_obs, start=1):
        t = Track(tid, tuple(obs))
        if len(obs) >= 2:
            t = Track(tid, t.observations,
                      track_speed(t, config.speed_window),
                      track_direction(t, origin, config.stationary_speed_epsilon))
        tracks.append(t)
    return tracks


def track_speed(track: Track, window: int) -> float:
    """Mean centroid displacement per frame over the last ``window`` observations."""
    obs = track.observations
    if len(obs) < 2:
        raise UndefinedMotionError(f"track {track.track_id}: speed needs 2 observations")
    obs = obs[-max(window, 2):]
    dist = 0.0
    for a, b in zip(obs, obs[1:]):
        (ax, ay), (bx, by) = centroid(a.box), centroid(b.box)
        dist += math.hypot(bx - ax, by - ay)
    return dist / (obs[-1].frame_index - obs[0].frame_index)


def track_direction(track: Track, origin, epsilon: float, window: int | None = None) -> str:
    obs = track.observations
    if len(obs) < 2:
        raise UndefinedMotionError(f"track {track.track_id}: direction needs 2 observations")
    if window is not None:
        obs = obs[-max(window, 2):]
    ox, oy = origin
    d0 = math.dist(centroid(obs[0].box), (ox, oy))
    d1 = math.dist(centroid(obs[-1].box), (ox, oy))
    rate = (d1 - d0) / (obs[-1].frame_index - obs[0].frame_index)
    if rate < -epsilon:
        return APPROACHING
    if rate > epsilon:
        return RECEDING
    return STATIONARY


def tracked_boxes(tracks: Sequence[Track], config: TrackerConfig | None = None,
                  origin=(960.0, 1080.0)) -> list[TrackedBox]:
    """Annotate every observation with the causal speed/direction of its track.

    Only observations up to the current frame are used, as a live system
    would. A track's first observation gets speed 0 and direction
    approaching so a vehicle is never invisible to the features.
    """
    config = config or TrackerConfig()
    out = []
    for track in tracks:
        obs = track.observations
        for i, o in enumerate(obs):
            if i == 0:
                speed, direction = 0.0, APPROACHING
            else:
                head = Track(track.track_id, obs[max(0, i + 1 - config.speed_window):i + 1])
                speed = track_speed(head, config.speed_window)
                direction = track_direction(head, origin, config.stationary_speed_epsilon)
            out.append(TrackedBox(track.track_id, o.frame_index, o.box, speed, direction))
    out.sort(key=lambda tb: (tb.frame_index, tb.track_id))
    return out


def directional_filter(boxes: Sequence[TrackedBox], divider_x: float | None,
                       origin) -> list[TrackedBox]:
    """Drop boxes lying wholly on the far side of the road divider.

    A box whose centroid is on the divider, or which spans it, is kept.
    """
    if divider_x is None:
        return list(boxes)
    ox = origin[0]
    if ox == divider_x:
        return list(boxes)
    near_is_left = ox < divider_x
    kept = []
    for tb in boxes:
        x0, _, x1, _ = tb.box
        cx = (x0 + x1) / 2.0
        if cx == divider_x or x0 < divider_x < x1:
            kept.append(tb)
        elif (cx < divider_x) == near_is_left:
            kept.append(tb)
    return kept


def group_by_frame(boxes: Sequence[TrackedBox]) -> dict[int, list[TrackedBox]]:
    out: dict[int, list[TrackedBox]] = {}
    for tb in boxes:
        out.setdefault(tb.frame_index, []).append(tb)
    return out


def export_tracks(boxes: Sequence[TrackedBox], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(boxes, key=lambda tb: (tb.track_id, tb.frame_index))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACKS_HEADER)
        for tb in rows:
            w.writerow([tb.track_id, tb.frame_index, *(int(v) for v in tb.box),
                        repr(float(tb.speed)), DIRECTION_CODES[tb.direction]])


def import_tracks(path) -> list[TrackedBox]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != TRACKS_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(TRACKS_HEADER)}")
        for row in reader:
            if not row:
                continue
            lineno = reader.line_num
            if len(row) != len(TRACKS_HEADER):
                raise ParseError(path, lineno, f"expected {len(TRACKS_HEADER)} fields")
            try:
                tid, fidx, x0, y0, x1, y1 = (int(v) for v in row[:6])
                speed = float(row[6])
                direction = _CODE_TO_DIRECTION[row[7]]
            except (ValueError, KeyError):
                raise ParseError(path, lineno, f"bad row {row}") from None
            out.append(TrackedBox(tid, fidx, (x0, y0, x1, y1), speed, direction))
    out.sort(key=lambda tb: (tb.frame_index, tb.track_id))
    return out
