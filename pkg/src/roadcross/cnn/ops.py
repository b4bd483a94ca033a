"""Inference primitives on HWC numpy arrays.

Feature maps are ``(height, width, channels)`` arrays in row-major order;
dense layers work on flat vectors. Kernels are ``(kh, kw, in_ch, out_ch)``.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    pass


def effective_kernel(k: int, dilation: int) -> int:
    return k + (k - 1) * (dilation - 1)


def conv_output_size(n: int, k: int, stride: int, dilation: int, padding: str) -> int:
    k_eff = effective_kernel(k, dilation)
    if padding == "same":
        return math.ceil(n / stride)
    if padding == "valid":
        if n < k_eff:
            raise ShapeError(f"input extent {n} smaller than effective kernel {k_eff}")
        return (n - k_eff) // stride + 1
    raise ShapeError(f"unknown padding {padding!r}")


def _pad_amounts(n: int, k: int, stride: int, dilation: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    out = conv_output_size(n, k, stride, dilation, padding)
    total = max((out - 1) * stride + effective_kernel(k, dilation) - n, 0)
    return total // 2, total - total // 2


def _check_conv(x, kernels, bias, stride, dilation):
    if x.ndim != 3:
        raise ShapeError(f"conv2d expects an HWC tensor, got shape {x.shape}")
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be (kh, kw, in, out), got shape {kernels.shape}")
    if kernels.shape[2] != x.shape[2]:
        raise ShapeError(f"kernel expects {kernels.shape[2]} input channels, tensor has {x.shape[2]}")
    if bias is not None and np.shape(bias) != (kernels.shape[3],):
        raise ShapeError(f"bias shape {np.shape(bias)} does not match {kernels.shape[3]} filters")
    if stride < 1 or dilation < 1:
        raise ShapeError("stride and dilation must be >= 1")


def conv2d(x, kernels, bias=None, stride: int = 1, dilation: int = 1, padding: str = "valid") -> np.ndarray:
    """Cross-correlation lowered to one matrix product (im2col)."""
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    _check_conv(x, kernels, bias, stride, dilation)
    h, w, c = x.shape
    kh, kw, _, f = kernels.shape
    oh = conv_output_size(h, kh, stride, dilation, padding)
    ow = conv_output_size(w, kw, stride, dilation, padding)
    pt, pb = _pad_amounts(h, kh, stride, dilation, padding)
    pl, pr = _pad_amounts(w, kw, stride, dilation, padding)
    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x

    cols = np.empty((oh, ow, kh * kw * c), dtype=np.result_type(x, kernels))
    for a in range(kh):
        r0 = a * dilation
        for b in range(kw):
            c0 = b * dilation
            tap = (a * kw + b) * c
            cols[:, :, tap:tap + c] = xp[r0:r0 + (oh - 1) * stride + 1:stride,
                                         c0:c0 + (ow - 1) * stride + 1:stride, :]
    out = cols.reshape(oh * ow, -1) @ kernels.reshape(kh * kw * c, f)
    if bias is not None:
        out += bias
    return out.reshape(oh, ow, f)


def conv2d_direct(x, kernels, bias=None, stride: int = 1, dilation: int = 1, padding: str = "valid") -> np.ndarray:
    """Reference convolution: explicit loops over outputs, taps and channels."""
    x = np.asarray(x, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    _check_conv(x, kernels, bias, stride, dilation)
    h, w, c = x.shape
    kh, kw, _, f = kernels.shape
    oh = conv_output_size(h, kh, stride, dilation, padding)
    ow = conv_output_size(w, kw, stride, dilation, padding)
    pt, _ = _pad_amounts(h, kh, stride, dilation, padding)
    pl, _ = _pad_amounts(w, kw, stride, dilation, padding)
    out = np.zeros((oh, ow, f))
    for i in range(oh):
        for j in range(ow):
            for o in range(f):
                acc = 0.0 if bias is None else float(bias[o])
                for a in range(kh):
                    r = i * stride + a * dilation - pt
                    if r < 0 or r >= h:
                        continue
                    for b in range(kw):
                        s = j * stride + b * dilation - pl
                        if s < 0 or s >= w:
                            continue
                        for ch in range(c):
                            acc += x[r, s, ch] * kernels[a, b, ch, o]
                out[i, j, o] = acc
    return out


def batchnorm_infer(x, gamma, beta, mean, var, epsilon: float = 1e-3) -> np.ndarray:
    x = np.asarray(x)
    if np.shape(gamma) != (x.shape[-1],):
        raise ShapeError(f"batchnorm has {np.shape(gamma)} parameters for {x.shape[-1]} channels")
    return (x - mean) / np.sqrt(var + epsilon) * gamma + beta


def relu(x) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def dropout_infer(x, rate: float = 0.0):
    return x


def maxpool(x, pool: int = 2, stride: int | None = None) -> np.ndarray:
    x = np.asarray(x)
    stride = stride or pool
    if x.ndim != 3:
        raise ShapeError(f"maxpool expects an HWC tensor, got shape {x.shape}")
    h, w, _ = x.shape
    if h < pool or w < pool:
        raise ShapeError(f"pool {pool} larger than input {h}x{w}")
    oh, ow = (h - pool) // stride + 1, (w - pool) // stride + 1
    out = None
    for a in range(pool):
        for b in range(pool):
            win = x[a:a + (oh - 1) * stride + 1:stride, b:b + (ow - 1) * stride + 1:stride, :]
            out = win.copy() if out is None else np.maximum(out, win)
    return out


def global_avg_pool(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects an HWC tensor, got shape {x.shape}")
    return x.mean(axis=(0, 1))


def dense(x, weights, bias=None) -> np.ndarray:
    """Affine map on the flattened input; ``weights`` is ``(in, units)``."""
    v = np.asarray(x).reshape(-1)
    if weights.shape[0] != v.shape[0]:
        raise ShapeError(f"dense expects {weights.shape[0]} inputs, got {v.shape[0]}")
    out = v @ weights
    return out if bias is None else out + bias


def nearest_indices(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def resize_nearest(image, height: int, width: int) -> np.ndarray:
    image = np.asarray(image)
    rows = nearest_indices(image.shape[0], height)
    cols = nearest_indices(image.shape[1], width)
    return image[rows][:, cols]
