import math

import numpy as np
import pytest

from roadcross import svm
from roadcross._kv import ConfigError, ParseError
from roadcross.features import ScalerParams
from roadcross.svm import LinearSvmModel, SvmTrainConfig


def identity_model(weights, bias, threshold=0.5):
    d = len(weights)
    return LinearSvmModel(np.asarray(weights, dtype=float), float(bias),
                          ScalerParams(np.zeros(d), np.ones(d)), threshold)


def separable_toy(n=40, seed=0):
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(1.2, 4, n), rng.uniform(-3, 3, n)])
    neg = np.column_stack([rng.uniform(-4, -1.2, n), rng.uniform(-3, 3, n)])
    return np.vstack([pos, neg]), np.array([1] * n + [0] * n)


def test_separable_toy_perfect_training_accuracy():
    X, y = separable_toy()
    model = svm.train(X, y, (1.0, 1.0))
    assert np.array_equal(svm.predict(model, X), y)


def test_symmetric_dataset_small_bias():
    X = np.array([[1.0], [-1.0]] * 10)
    y = np.array([1, 0] * 10)
    model = svm.train(X, y, (1.0, 1.0), scale=False)
    assert abs(model.bias) < 0.1
    assert model.weights[0] > 0


def _duplicate_positives(X, y):
    rows, labels = [], []
    for x, lab in zip(X, y):
        for _ in range(2 if lab == 1 else 1):
            rows.append(x)
            labels.append(lab)
    return np.array(rows), np.array(labels)


def _hinge_objective(model, X, y, lam):
    """Unit-weight objective written out longhand."""
    total = 0.0
    for x, lab in zip(X, y):
        xs = [(v - lo) / (hi - lo) if hi > lo else 0.0
              for v, lo, hi in zip(x, model.scaler.min, model.scaler.max)]
        m = sum(w * v for w, v in zip(model.weights, xs)) + model.bias
        total += max(0.0, 1.0 - (1 if lab == 1 else -1) * m)
    sq = sum(w * w for w in model.weights) + model.bias ** 2
    return 0.5 * lam * sq + total / len(y)


def test_weighted_equals_duplicated():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=50) > 0.3).astype(int)
    cfg = SvmTrainConfig(regularization_lambda=1e-2, epochs=20, rng_seed=5)
    weighted = svm.train(X, y, (1.0, 2.0), cfg)
    Xd, yd = _duplicate_positives(X, y)
    dup = svm.train(Xd, yd, (1.0, 1.0), cfg)
    assert abs(weighted.train_loss - dup.train_loss) <= 1e-9
    assert abs(dup.train_loss - _hinge_objective(dup, Xd, yd, 1e-2)) <= 1e-9
    assert np.allclose(weighted.weights, dup.weights, atol=1e-12)


def test_default_class_weight_is_ratio():
    X, y = separable_toy()
    y = y.copy()
    y[:10] = 0  # 30 safe, 50 unsafe
    model = svm.train(X, y)
    assert model.class_weights == (1.0, pytest.approx(50 / 30))


def test_training_is_deterministic():
    X, y = separable_toy(seed=3)
    a = svm.train(X, y, config=SvmTrainConfig(rng_seed=9))
    b = svm.train(X, y, config=SvmTrainConfig(rng_seed=9))
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


@pytest.mark.parametrize("X, y", [
    (np.zeros((4, 2)), np.array([1, 1, 1, 1])),
    (np.zeros((4, 2)), np.array([1, 0, 1])),
    (np.zeros((4, 2)), np.array([1, 0, 2, 0])),
])
def test_bad_training_input(X, y):
    with pytest.raises(ValueError):
        svm.train(X, y)


def test_bad_train_config():
    X, y = separable_toy()
    with pytest.raises(ConfigError) as exc:
        svm.train(X, y, config=SvmTrainConfig(regularization_lambda=0))
    assert exc.value.field == "regularization_lambda"


# -- score / predict --------------------------------------------------------


def test_score_examples():
    m = identity_model([1.0], 0.0)
    assert svm.score(m, np.array([0.0])) == 0.5
    assert svm.score(m, np.array([1e4])) == pytest.approx(1.0)
    assert svm.score(m, np.array([-2.0])) == pytest.approx(1 / (1 + math.e ** 2))
    assert 0.0 <= svm.score(m, np.array([-800.0])) < 1e-300  # no overflow warning or nan


def test_predict_threshold_rule():
    m = identity_model([1.0], 0.0)
    logit = lambda p: math.log(p / (1 - p))  # noqa: E731
    assert svm.predict(m, np.array([logit(0.51)])) == 1
    assert svm.predict(m, np.array([0.0])) == 0  # score exactly 0.5
    assert svm.predict(m, np.array([logit(0.2)])) == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        svm.score(identity_model([1.0, 2.0], 0.0), np.zeros(3))


# -- multi-frame chain ---------------------------------------------------------


def test_multiframe_k1_is_plain_model():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(12, 3))
    single = identity_model([1.0, 0.0, 0.0], 0.0)
    multi = identity_model([0.3, -1.0, 2.0], 0.1)
    assert np.array_equal(svm.predict_multiframe_video(single, multi, F, 1), svm.predict(multi, F))


# Hand-stepped chain. single: safe iff x0 > 0.5. multi (k=3) sees
# [x0, x1, p(n-2), p(n-1)] and is safe iff x1 + p(n-2) + p(n-1) > 1.5.
X0 = [1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0]
X1 = [0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
HAND = [0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1]


def test_multiframe_hand_trace():
    F = np.column_stack([X0, X1]).astype(float)
    single = identity_model([1.0, 0.0], -0.5)
    multi = identity_model([0.0, 1.0, 1.0, 1.0], -1.5)
    assert svm.predict_multiframe_video(single, multi, F, 3).tolist() == HAND


def test_first_frame_uses_zero_history():
    F = np.ones((3, 1))
    single = identity_model([1.0], 0.0)
    M = svm.multiframe_matrix(F, svm.predict(single, F), 4)
    assert M[0, 1:].tolist() == [0, 0, 0]
    assert M[2, 1:].tolist() == [0, 1, 1]


def test_label_columns_not_rescaled():
    rng = np.random.default_rng(2)
    X = np.hstack([rng.normal(size=(30, 2)), rng.integers(0, 2, (30, 2))])
    y = (X[:, 0] > 0).astype(int)
    model = svm.train(X, y, n_unscaled=2)
    assert model.scaler.min[2:].tolist() == [0, 0] and model.scaler.max[2:].tolist() == [1, 1]


# -- model file ---------------------------------------------------------------


def test_model_round_trip(tmp_path):
    X, y = separable_toy()
    model = svm.train(X, y)
    svm.save_model(model, tmp_path / "m.svm")
    back = svm.load_model(tmp_path / "m.svm")
    assert np.array_equal(back.weights, model.weights)
    assert back.bias == model.bias and back.class_weights == model.class_weights
    assert np.array_equal(svm.score(back, X), svm.score(model, X))


def test_model_file_errors(tmp_path):
    p = tmp_path / "m.svm"
    p.write_text("2 0.5 1.0 1.0\n0.0\n1.0 2.0\n0 0 0\n1 1\n")
    with pytest.raises(ParseError) as exc:
        svm.load_model(p)
    assert exc.value.line == 4
    with pytest.raises(FileNotFoundError):
        svm.load_model(tmp_path / "missing.svm")
