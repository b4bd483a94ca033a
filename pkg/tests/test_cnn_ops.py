import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadcross.cnn import ops
from roadcross.cnn.ops import ShapeError


def loop_conv(x, k, b, stride, dilation, pad_top, pad_left, out_h, out_w):
    """Test-local quadruple loop with explicit padding, independent of ops."""
    h, w, c = x.shape
    kh, kw, _, f = k.shape
    out = np.zeros((out_h, out_w, f))
    for i in range(out_h):
        for j in range(out_w):
            for o in range(f):
                acc = b[o]
                for u in range(kh):
                    for v in range(kw):
                        r = i * stride + u * dilation - pad_top
                        s = j * stride + v * dilation - pad_left
                        if 0 <= r < h and 0 <= s < w:
                            acc += float(np.dot(x[r, s, :], k[u, v, :, o]))
                out[i, j, o] = acc
    return out


def test_identity_kernel():
    x = np.random.default_rng(0).normal(size=(5, 6, 1))
    out = ops.conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    assert np.array_equal(out, x)


def test_dilated_impulse_response():
    x = np.zeros((9, 9, 1))
    x[4, 4, 0] = 1.0
    # 'same' keeps the impulse centred so offsets are easy to read
    out = ops.conv2d(x, np.ones((3, 3, 1, 1)), np.zeros(1), dilation=2, padding="same")[:, :, 0]
    rows, cols = np.nonzero(out)
    assert sorted(set(rows - 4)) == [-2, 0, 2] and sorted(set(cols - 4)) == [-2, 0, 2]
    assert len(rows) == 9
    valid = ops.conv2d(x, np.ones((3, 3, 1, 1)), np.zeros(1), dilation=2)[:, :, 0]
    assert valid.shape == (5, 5)
    assert set(zip(*np.nonzero(valid))) == {(r, c) for r in (0, 2, 4) for c in (0, 2, 4)}


def test_random_same_conv_vs_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(16, 16, 3))
    k = rng.normal(size=(3, 3, 3, 8))
    b = rng.normal(size=8)
    out = ops.conv2d(x, k, b, stride=1, dilation=2, padding="same")
    # same padding with k_eff 5 on stride 1: 2 each side
    ref = loop_conv(x, k, b, 1, 2, 2, 2, 16, 16)
    assert np.max(np.abs(out - ref)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(h=st.integers(3, 12), w=st.integers(3, 12), c=st.integers(1, 3), f=st.integers(1, 3),
       k=st.integers(1, 3), stride=st.integers(1, 3), dilation=st.integers(1, 3),
       padding=st.sampled_from(["same", "valid"]), seed=st.integers(0, 2**31))
def test_conv_matches_direct(h, w, c, f, k, stride, dilation, padding, seed):
    k_eff = k + (k - 1) * (dilation - 1)
    if padding == "valid" and (h < k_eff or w < k_eff):
        return
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(h, w, c))
    kern = rng.normal(size=(k, k, c, f))
    b = rng.normal(size=f)
    a = ops.conv2d(x, kern, b, stride, dilation, padding)
    d = ops.conv2d_direct(x, kern, b, stride, dilation, padding)
    assert a.shape == d.shape
    assert np.allclose(a, d, rtol=1e-9, atol=1e-9)


def test_same_padding_is_tf_style():
    # n=6, k=3, stride 2: out 3, total pad 1, all of it at the bottom/right
    assert ops._pad_amounts(6, 3, 2, 1, "same") == (0, 1)
    assert ops._pad_amounts(7, 3, 1, 3, "same") == (3, 3)
    assert ops.conv_output_size(224, 3, 2, 3, "same") == 112


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        ops.conv2d(np.zeros((4, 4, 2)), np.zeros((3, 3, 3, 1)))
    with pytest.raises(ShapeError):
        ops.conv2d(np.zeros((4, 4, 1)), np.zeros((3, 3, 1, 1)), dilation=2)  # k_eff 5 > 4
    with pytest.raises(ShapeError):
        ops.conv2d(np.zeros((4, 4, 1)), np.zeros((3, 3, 1, 2)), np.zeros(3))


def test_batchnorm_identity():
    x = np.random.default_rng(2).normal(size=(3, 3, 4))
    one, zero = np.ones(4), np.zeros(4)
    assert np.array_equal(ops.batchnorm_infer(x, one, zero, zero, one, epsilon=0.0), x)


def test_batchnorm_formula():
    x = np.full((1, 1, 1), 3.0)
    out = ops.batchnorm_infer(x, np.array([2.0]), np.array([0.5]), np.array([1.0]), np.array([3.0]),
                              epsilon=1.0)
    assert out[0, 0, 0] == pytest.approx(2.0 * (3.0 - 1.0) / 2.0 + 0.5)


def test_maxpool_and_global_average():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
    assert ops.maxpool(x, 2, 2).reshape(-1).tolist() == [4.0]
    assert ops.global_avg_pool(np.full((5, 3, 1), 7.0)).tolist() == [7.0]
    big = np.arange(16.0).reshape(4, 4, 1)
    assert ops.maxpool(big, 2).reshape(2, 2).tolist() == [[5, 7], [13, 15]]


def test_elementwise():
    assert ops.relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0, 0, 2]
    s = ops.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]
    x = np.arange(4.0)
    assert np.array_equal(ops.dropout_infer(x, 0.4), x)


def test_dense():
    W = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert ops.dense(np.array([1.0, 0.0, -1.0]), W, np.array([0.5, 0.0])).tolist() == [-3.5, -4.0]


def test_resize_nearest_sampling():
    img = np.arange(16.0).reshape(4, 4, 1)
    out = ops.resize_nearest(img, 2, 2)
    assert out[:, :, 0].tolist() == [[0, 2], [8, 10]]
