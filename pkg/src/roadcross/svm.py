"""Class-weighted linear SVM trained with a seeded Pegasos-style solver.

Labels are 1 (safe) and 0 (unsafe). The solver minimises::

    lambda/2 * |w|^2 + sum_i c_i * hinge(y_i (w . x_i + b)) / sum_i c_i

where ``c_i`` is the class weight of sample ``i``. The bias is folded into
``w`` as a constant feature. Rather than scaling each subgradient by
``c_i``, samples are drawn with probability proportional to ``c_i``: a
uniform draw on ``[0, sum c)`` is mapped through the cumulative weights.
With integer weights this is the same draw sequence as uniform sampling
over a dataset in which each sample is repeated ``c_i`` times in place,
so the two runs produce identical weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kv import ConfigError, ParseError
from .features import ScalerParams, apply_scaler, fit_scaler, label_history


@dataclass(frozen=True)
class SvmTrainConfig:
    regularization_lambda: float = 1e-4
    epochs: int = 50
    rng_seed: int = 0

    def validate(self) -> None:
        if not self.regularization_lambda > 0:
            raise ConfigError("regularization_lambda", "must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be at least 1")


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    scaler: ScalerParams
    threshold: float = 0.5
    class_weights: tuple[float, float] = (1.0, 1.0)  # (unsafe, safe)
    train_loss: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if len(self.weights) != self.scaler.dim:
            raise ValueError("weights and scaler disagree on dimension")

    @property
    def dim(self) -> int:
        return len(self.weights)


def class_weight_ratio(y) -> float:
    """Unsafe-to-safe count ratio, used as the safe-class weight."""
    y = np.asarray(y)
    n_safe = int(np.sum(y == 1))
    n_unsafe = int(np.sum(y == 0))
    if n_safe == 0:
        raise ValueError("no safe samples; class weight undefined")
    return n_unsafe / n_safe


def _sample_weights(y: np.ndarray, class_weights) -> np.ndarray:
    w_unsafe, w_safe = class_weights
    if w_unsafe <= 0 or w_safe <= 0:
        raise ValueError("class weights must be positive")
    return np.where(y == 1, float(w_safe), float(w_unsafe))


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} rows vs {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    return X, y


def _fit_model_scaler(X: np.ndarray, n_unscaled: int, scale: bool) -> ScalerParams:
    d = X.shape[1]
    if not scale:
        return ScalerParams(np.zeros(d), np.ones(d))
    params = fit_scaler(X)
    if n_unscaled:
        lo, hi = params.min.copy(), params.max.copy()
        lo[d - n_unscaled:] = 0.0
        hi[d - n_unscaled:] = 1.0
        params = ScalerParams(lo, hi)
    return params


def weighted_hinge_objective(w_aug: np.ndarray, Xa: np.ndarray, y: np.ndarray,
                             sample_weights: np.ndarray, lam: float) -> float:
    signs = np.where(y == 1, 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - signs * (Xa @ w_aug))
    return 0.5 * lam * float(w_aug @ w_aug) + float(sample_weights @ hinge) / float(sample_weights.sum())


def train(X, y, class_weights: tuple[float, float] | None = None,
          config: SvmTrainConfig | None = None, n_unscaled: int = 0,
          scale: bool = True, threshold: float = 0.5) -> LinearSvmModel:
    """Fit a scaler on ``X`` then train on the scaled features.

    ``class_weights`` is ``(w_unsafe, w_safe)`` and defaults to
    ``(1, n_unsafe / n_safe)`` from ``y``. One epoch is ``round(sum of
    sample weights)`` steps; the returned weights average the iterates of
    the second half of training. The trailing ``n_unscaled``
    columns (previous-frame labels) bypass scaling.
    """
    config = config or SvmTrainConfig()
    config.validate()
    X, y = _check_xy(X, y)
    if class_weights is None:
        class_weights = (1.0, class_weight_ratio(y))
    class_weights = (float(class_weights[0]), float(class_weights[1]))
    scaler = _fit_model_scaler(X, n_unscaled, scale)
    Xa = np.hstack([apply_scaler(scaler, X), np.ones((X.shape[0], 1))])
    signs = np.where(y == 1, 1.0, -1.0)
    c = _sample_weights(y, class_weights)
    cum = np.cumsum(c)
    total = float(cum[-1])
    steps = max(1, int(round(total)))
    lam = config.regularization_lambda

    rng = np.random.default_rng(config.rng_seed)
    w = np.zeros(Xa.shape[1])
    w_sum = np.zeros_like(w)
    n_total = config.epochs * steps
    avg_from = n_total // 2 + 1
    t = 0
    for _ in range(config.epochs):
        draws = np.searchsorted(cum, rng.random(steps) * total, side="right")
        for i in draws:
            t += 1
            eta = 1.0 / (lam * t)
            x = Xa[i]
            violated = signs[i] * float(w @ x) < 1.0
            w *= 1.0 - eta * lam
            if violated:
                w += (eta * signs[i]) * x
            if t >= avg_from:
                w_sum += w
    # the last iterate oscillates with step 1/(lambda t); average the second half
    w = w_sum / (n_total - avg_from + 1)

    loss = weighted_hinge_objective(w, Xa, y, c, lam)
    return LinearSvmModel(w[:-1].copy(), float(w[-1]), scaler, threshold, class_weights, loss)


def objective(model: LinearSvmModel, X, y, class_weights, lam: float) -> float:
    """Weighted training objective of ``model`` on raw features ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    Xa = np.hstack([apply_scaler(model.scaler, X), np.ones((X.shape[0], 1))])
    w = np.append(model.weights, model.bias)
    return weighted_hinge_objective(w, Xa, y, _sample_weights(y, class_weights), lam)


def margin(model: LinearSvmModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: model expects {model.dim}, got {x.shape[-1]}")
    m = apply_scaler(model.scaler, x) @ model.weights + model.bias
    return float(m) if np.ndim(m) == 0 else m


def _logistic(m):
    m = np.asarray(m, dtype=float)
    e = np.exp(-np.abs(m))
    return np.where(m >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def score(model: LinearSvmModel, x):
    """Logistic link on the margin: 0.5 exactly at the decision boundary."""
    s = _logistic(margin(model, x))
    return float(s) if s.ndim == 0 else s


def predict(model: LinearSvmModel, x):
    """1 (safe) iff score > threshold; compared in margin space so that the
    0.5 threshold is exactly the sign of the margin."""
    cut = math.log(model.threshold / (1.0 - model.threshold))
    m = np.asarray(margin(model, x))
    out = (m > cut).astype(int)
    return int(out) if out.ndim == 0 else out


def multiframe_matrix(frame_features, single_predictions: Sequence[int], k: int) -> np.ndarray:
    """Rows ``[features_n || labels n-(k-1) .. n-1]`` for every frame of one video."""
    if k < 1:
        raise ValueError("window size k must be >= 1")
    F = np.asarray(frame_features, dtype=float)
    hist = np.array([label_history(single_predictions, n, k) for n in range(len(F))],
                    dtype=float).reshape(len(F), k - 1)
    return np.hstack([F, hist])


def predict_multiframe_video(single_model: LinearSvmModel, multi_model: LinearSvmModel,
                             frame_features, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("window size k must be >= 1")
    F = np.asarray(frame_features, dtype=float)
    if len(F) == 0:
        return np.zeros(0, dtype=int)
    single = np.atleast_1d(predict(single_model, F))
    return np.atleast_1d(predict(multi_model, multiframe_matrix(F, single, k)))


def multiframe_scores(single_model, multi_model, frame_features, k: int) -> np.ndarray:
    F = np.asarray(frame_features, dtype=float)
    if len(F) == 0:
        return np.zeros(0)
    single = np.atleast_1d(predict(single_model, F))
    return np.atleast_1d(score(multi_model, multiframe_matrix(F, single, k)))


# -- model file -------------------------------------------------------------


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: LinearSvmModel, path) -> None:
    lines = [
        f"{model.dim} {model.threshold!r} {model.class_weights[0]!r} {model.class_weights[1]!r}",
        repr(float(model.bias)),
        _floats(model.weights),
        _floats(model.scaler.min),
        _floats(model.scaler.max),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> LinearSvmModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 5:
        raise ParseError(path, len(lines) + 1, "model file needs 5 lines")
    try:
        head = lines[0].split()
        if len(head) != 4:
            raise ValueError
        dim, threshold, w_unsafe, w_safe = int(head[0]), float(head[1]), float(head[2]), float(head[3])
    except ValueError:
        raise ParseError(path, 1, "expected 'dim threshold w_unsafe w_safe'") from None
    try:
        bias = float(lines[1])
    except ValueError:
        raise ParseError(path, 2, "bias must be a number") from None
    vectors = []
    for lineno in (3, 4, 5):
        try:
            vec = np.array([float(v) for v in lines[lineno - 1].split()], dtype=float)
        except ValueError:
            raise ParseError(path, lineno, "non-numeric value") from None
        if len(vec) != dim:
            raise ParseError(path, lineno, f"expected {dim} values, got {len(vec)}")
        vectors.append(vec)
    weights, lo, hi = vectors
    return LinearSvmModel(weights, bias, ScalerParams(lo, hi), threshold, (w_unsafe, w_safe))
