"""Video-level splits, precision/recall, PR sweeps and result tables.

The positive class is "safe" (label 1). Precision is undefined, not zero,
when nothing is predicted safe; recall is undefined when nothing is truly
safe.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kv import ConfigError, ParseError

REPORT_HEADER = ["method", "precision", "recall", "throughput_fps"]
SPLIT_HEADER = ["video_id", "split"]
SPLIT_NAMES = ("train", "test", "validation")


@dataclass(frozen=True)
class SplitSpec:
    mode: str
    counts: tuple[int, ...]
    rng_seed: int = 0

    def validate(self, total: int) -> None:
        expected = {"two_way": 2, "three_way": 3}.get(self.mode)
        if expected is None:
            raise ConfigError("mode", f"unknown split mode {self.mode!r}")
        if len(self.counts) != expected:
            raise ConfigError("counts", f"{self.mode} needs {expected} counts, got {len(self.counts)}")
        if any(c < 1 for c in self.counts):
            raise ConfigError("counts", "every split needs at least one video")
        if sum(self.counts) != total:
            raise ConfigError("counts", f"counts sum to {sum(self.counts)} but there are {total} videos")


def split_videos(video_ids: Sequence, spec: SplitSpec) -> dict[str, list]:
    """Seeded shuffle of whole videos, then partition as train / test [/ validation]."""
    ids = list(video_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("video ids must be unique")
    spec.validate(len(ids))
    perm = np.random.default_rng(spec.rng_seed).permutation(len(ids))
    out: dict[str, list] = {}
    start = 0
    for name, count in zip(SPLIT_NAMES, spec.counts):
        chosen = sorted(perm[start:start + count])
        out[name] = [ids[i] for i in chosen]
        start += count
    return out


def write_split(splits: dict[str, list], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPLIT_HEADER)
        for name in SPLIT_NAMES:
            for vid in splits.get(name, []):
                w.writerow([vid, name])


def read_split(path) -> dict[str, list[str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    out: dict[str, list[str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != SPLIT_HEADER:
            raise ParseError(path, 1, "expected header video_id,split")
        seen = set()
        for row in reader:
            if not row:
                continue
            if len(row) != 2 or row[1] not in SPLIT_NAMES:
                raise ParseError(path, reader.line_num, f"bad split row {row}")
            if row[0] in seen:
                raise ParseError(path, reader.line_num, f"video {row[0]} listed twice")
            seen.add(row[0])
            out.setdefault(row[1], []).append(row[0])
    return out


@dataclass(frozen=True)
class Metrics:
    precision: float | None
    recall: float | None
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int


def compute_metrics(predictions, truths) -> Metrics:
    p = np.asarray(predictions).astype(int)
    t = np.asarray(truths).astype(int)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {t.shape} truths")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    tn = int(np.sum((p == 0) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return Metrics(precision, recall, tp, fp, tn, fn)


def pr_curve(scores, truths, thresholds) -> list[tuple[float, float | None, float | None]]:
    """Precision and recall when predicting safe for ``score > threshold``."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truths).astype(int)
    if s.shape != t.shape:
        raise ValueError("scores and truths differ in length")
    pos_scores = np.sort(s[t == 1])
    neg_scores = np.sort(s[t == 0])
    n_pos = len(pos_scores)
    out = []
    for th in thresholds:
        tp = n_pos - int(np.searchsorted(pos_scores, th, side="right"))
        fp = len(neg_scores) - int(np.searchsorted(neg_scores, th, side="right"))
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / n_pos if n_pos else None
        out.append((float(th), precision, recall))
    return out


@dataclass(frozen=True)
class MethodResult:
    method: str
    precision: float | None
    recall: float | None
    throughput_fps: float | None = None


def _fmt(v: float | None) -> str:
    return "undefined" if v is None else f"{v:.4f}"


def report(results: Sequence[MethodResult], path=None) -> str:
    """Write the results CSV (if ``path``) and return a text summary table."""
    rows = [[r.method, _fmt(r.precision), _fmt(r.recall),
             "" if r.throughput_fps is None else f"{r.throughput_fps:.2f}"] for r in results]
    if path is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(rows)
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    header = ["Method", "Precision", "Recall", "Throughput (fps)"]
    table = [header] + [[r[0], r[1], r[2], r[3] or "-"] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if any(r.throughput_fps is not None for r in results):
        lines.append("throughput: local CPU measurement, not comparable to embedded-device figures")
    return "\n".join(lines) + "\n"
