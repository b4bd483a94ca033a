import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roadcross._kv import ParseError
from roadcross.features import (
    RegionGrid, apply_scaler, fit_scaler, frame_feature_matrix, label_history,
    multi_frame_features, read_feature_csv, region_of, single_frame_features, write_feature_csv,
)
from roadcross.tracking import APPROACHING, TrackedBox

GRID = RegionGrid()
DIAG = math.hypot(1920, 1080)


def tb(box, speed=0.0, frame=1, tid=1):
    return TrackedBox(tid, frame, box, speed, APPROACHING)


def test_region_of_centre_corner_and_boundary():
    assert region_of((950, 530, 970, 550), GRID) == 4
    assert region_of((0, 0, 0, 0), GRID) == 0
    assert region_of((630, 90, 650, 110), GRID) == 1  # x = 640 goes right
    assert region_of((1900, 1070, 1920, 1080), GRID) == 5


def test_empty_frame_defaults():
    v = single_frame_features([], GRID, (960, 1080))
    assert v.shape == (24,)
    assert v.tolist() == [0.0, 0.0, DIAG, 0.0] * 6


def test_single_box_hand_computed():
    # 100x50 box centred at (1600, 500): region 2, distance 500 from (1600, 1000)
    v = single_frame_features([tb((1550, 475, 1650, 525), speed=7.0)], GRID, (1600, 1000))
    expected = [0.0, 0.0, DIAG, 0.0] * 6
    expected[8:12] = [1, 5000, 500, 7]
    assert v.tolist() == pytest.approx(expected)


def test_region_aggregates():
    boxes = [tb((0, 0, 10, 10), speed=2), tb((100, 100, 120, 130), speed=9)]
    v = single_frame_features(boxes, GRID, (0, 0))
    assert v[0:4].tolist() == pytest.approx([2, 700, math.hypot(5, 5), 9])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1800), st.integers(0, 1000), st.integers(1, 120),
                          st.integers(1, 80), st.floats(0, 30)), max_size=8))
def test_length_always_24(raw):
    boxes = [tb((x, y, x + w, y + h), s) for x, y, w, h, s in raw]
    v = single_frame_features(boxes, GRID, (960, 1080))
    assert v.shape == (24,)
    assert v[0::4].sum() == len(boxes)


def test_frame_feature_matrix_applies_divider():
    boxes = [tb((1500, 400, 1600, 450), frame=1), tb((300, 400, 400, 450), frame=2)]
    X = frame_feature_matrix([1, 2, 3], boxes, GRID, (960, 1080), divider_x=1300)
    assert X.shape == (3, 24)
    assert X[0, 0::4].sum() == 0  # far side dropped
    assert X[1, 0::4].sum() == 1
    assert X[2, 0::4].sum() == 0


# -- scaling ------------------------------------------------------------------


def test_scaler_examples():
    p = fit_scaler(np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]]))
    assert apply_scaler(p, np.array([[0, 3], [5, 3], [10, 3]])).tolist() == [[0, 0], [0.5, 0], [1, 0]]
    assert apply_scaler(p, np.array([12.0, 3.0])).tolist() == pytest.approx([1.2, 0.0])


def test_scaler_rejects_empty():
    with pytest.raises(ValueError):
        fit_scaler(np.zeros((0, 24)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6)))
def test_scaled_training_data_in_unit_interval(m):
    out = apply_scaler(fit_scaler(m), m)
    assert np.all(out >= -1e-12) and np.all(out <= 1 + 1e-12)


# -- multi-frame --------------------------------------------------------------


@pytest.mark.parametrize("k, length", [(10, 33), (1, 24), (5, 28)])
def test_multi_frame_length(k, length):
    base = np.arange(24.0)
    v = multi_frame_features(base, [1] * (k - 1), k)
    assert v.shape == (length,)
    assert np.array_equal(v[:24], base)


def test_multi_frame_length_mismatch():
    with pytest.raises(ValueError):
        multi_frame_features(np.zeros(24), [1, 0], 10)


def test_label_history_padding_and_order():
    preds = [1, 0, 1, 1, 0]
    assert label_history(preds, 0, 4) == [0, 0, 0]
    assert label_history(preds, 2, 4) == [0, 1, 0]
    assert label_history(preds, 4, 4) == [0, 1, 1]
    assert label_history(preds, 3, 1) == []


# -- CSV ----------------------------------------------------------------------


def test_feature_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.random((7, 33)) * 1000
    y = rng.integers(0, 2, 7)
    write_feature_csv(tmp_path / "f.csv", X, y)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "f0" and header[23] == "f23" and header[24] == "p0" and header[-1] == "label"
    X2, y2 = read_feature_csv(tmp_path / "f.csv")
    assert np.array_equal(X, X2) and np.array_equal(y, y2)


def test_feature_csv_bad_width(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("f0,f1,label\n1,2,0\n1,2\n")
    with pytest.raises(ParseError) as exc:
        read_feature_csv(p)
    assert exc.value.line == 3
