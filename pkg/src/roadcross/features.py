"""Region-grid features for the frame classifiers.

A frame is cut into a ``rows x cols`` grid (2x3 by default). Each region
contributes four numbers, in this order::

    count, total box area, min centroid distance to origin, max track speed

giving 24 values per frame. Regions are laid out row-major. An empty region
reports distance equal to the frame diagonal. The multi-frame vector appends
the single-frame classifier's labels for the previous ``k - 1`` frames,
oldest first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kv import ConfigError, ParseError
from .tracking import TrackedBox, directional_filter, group_by_frame

FEATURES_PER_REGION = 4


@dataclass(frozen=True)
class RegionGrid:
    frame_width: float = 1920
    frame_height: float = 1080
    rows: int = 2
    cols: int = 3

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("rows/cols", "grid needs at least one cell")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ConfigError("frame_width/frame_height", "must be positive")

    @property
    def n_regions(self) -> int:
        return self.rows * self.cols

    @property
    def n_features(self) -> int:
        return self.n_regions * FEATURES_PER_REGION

    @property
    def diagonal(self) -> float:
        return math.hypot(self.frame_width, self.frame_height)


@dataclass(frozen=True)
class ScalerParams:
    min: np.ndarray
    max: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.min)


def region_of(box, grid: RegionGrid) -> int:
    """Region holding the box centroid; boundary points go to the right/bottom cell."""
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    col = min(max(math.floor(cx * grid.cols / grid.frame_width), 0), grid.cols - 1)
    row = min(max(math.floor(cy * grid.rows / grid.frame_height), 0), grid.rows - 1)
    return row * grid.cols + col


def single_frame_features(boxes: Sequence[TrackedBox], grid: RegionGrid, origin) -> np.ndarray:
    """Per-region [count, area, min distance, max speed] for already-filtered boxes."""
    out = np.zeros((grid.n_regions, FEATURES_PER_REGION))
    out[:, 2] = grid.diagonal
    ox, oy = origin
    for tb in boxes:
        r = region_of(tb.box, grid)
        x0, y0, x1, y1 = tb.box
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        out[r, 0] += 1
        out[r, 1] += (x1 - x0) * (y1 - y0)
        out[r, 2] = min(out[r, 2], math.hypot(cx - ox, cy - oy))
        out[r, 3] = max(out[r, 3], tb.speed)
    return out.reshape(-1)


def frame_feature_matrix(frame_indices: Sequence[int], boxes: Sequence[TrackedBox],
                         grid: RegionGrid, origin, divider_x=None) -> np.ndarray:
    """Filter by divider and featurize every frame; one row per frame index."""
    by_frame = group_by_frame(boxes)
    rows = [
        single_frame_features(directional_filter(by_frame.get(i, []), divider_x, origin), grid, origin)
        for i in frame_indices
    ]
    if not rows:
        return np.zeros((0, grid.n_features))
    return np.vstack(rows)


def fit_scaler(matrix) -> ScalerParams:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    return ScalerParams(m.min(axis=0), m.max(axis=0))


def apply_scaler(params: ScalerParams, x) -> np.ndarray:
    """Min-max scale; constant features map to 0 and nothing is clipped."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dim:
        raise ValueError(f"scaler expects {params.dim} features, got {x.shape[-1]}")
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - params.min) / safe, 0.0)


def label_history(predictions: Sequence[int], position: int, k: int) -> list[int]:
    """Labels for the ``k - 1`` frames before ``position``, zero-padded at the start."""
    if k < 1:
        raise ValueError("window size k must be >= 1")
    out = []
    for j in range(position - (k - 1), position):
        out.append(int(predictions[j]) if j >= 0 else 0)
    return out


def multi_frame_features(current, previous_predictions: Sequence[int], k: int | None = None) -> np.ndarray:
    current = np.asarray(current, dtype=float)
    if k is not None and len(previous_predictions) != k - 1:
        raise ValueError(f"need {k - 1} previous labels for k={k}, got {len(previous_predictions)}")
    return np.concatenate([current, np.asarray(previous_predictions, dtype=float)])


def feature_names(n_base: int = 24, k: int = 1) -> list[str]:
    return [f"f{i}" for i in range(n_base)] + [f"p{j}" for j in range(k - 1)]


def write_feature_csv(path, X, labels, n_base: int = 24) -> None:
    X = np.asarray(X, dtype=float)
    k = X.shape[1] - n_base + 1 if X.size else 1
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_names(n_base, k) + ["label"])
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label" or not header[0] == "f0":
            raise ParseError(path, 1, "expected header f0..,label")
        width = len(header) - 1
        rows, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != width + 1:
                raise ParseError(path, reader.line_num, f"expected {width + 1} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:-1]])
                labels.append(int(row[-1]))
            except ValueError:
                raise ParseError(path, reader.line_num, "non-numeric field") from None
    X = np.array(rows, dtype=float).reshape(len(rows), width)
    return X, np.array(labels, dtype=int)
