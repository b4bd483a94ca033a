"""Declarative network specs, weight files and the forward pass.

Spec grammar, one statement per line (``#`` starts a comment)::

    name <identifier>
    input height=<int> width=<int> channels=<int>
    conv2d out_channels=<int> kernel=<int> [kernel_h= kernel_w=] [stride=1] [dilation=1] [padding=same|valid]
    batchnorm [epsilon=0.001]
    relu | sigmoid | global_avg_pool
    maxpool pool=<int> [stride=<pool>]
    dropout rate=<float>
    dense units=<int>

Weights file: for every layer in spec order, a little-endian uint64
element count followed by that many little-endian float32 values (count 0
for parameter-free layers). conv2d stores its ``(kh, kw, in, out)`` kernel
then its bias; batchnorm stores gamma, beta, moving mean, moving variance;
dense stores its ``(in, units)`` matrix then its bias.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .._kv import ParseError
from . import ops
from .ops import ShapeError

KINDS = ("conv2d", "batchnorm", "relu", "maxpool", "global_avg_pool", "dense", "sigmoid", "dropout")
REFERENCE_SPECS = ("mobilenet_head_reference", "roadcrossnet_reference", "dilated_roadcrossnet_reference")

_INT_KEYS = {"out_channels", "kernel", "kernel_h", "kernel_w", "stride", "dilation", "pool", "units"}
_FLOAT_KEYS = {"epsilon", "rate"}
_ALLOWED = {
    "conv2d": {"out_channels", "kernel", "kernel_h", "kernel_w", "stride", "dilation", "padding"},
    "batchnorm": {"epsilon"},
    "relu": set(),
    "sigmoid": set(),
    "global_avg_pool": set(),
    "maxpool": {"pool", "stride"},
    "dropout": {"rate"},
    "dense": {"units"},
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    line: int = 0

    def get(self, key, default=None):
        return self.params.get(key, default)

    @property
    def label(self) -> str:
        return f"{self.kind} (line {self.line})"

    # conv2d conveniences
    @property
    def kernel_hw(self) -> tuple[int, int]:
        k = self.params.get("kernel")
        return self.params.get("kernel_h", k), self.params.get("kernel_w", k)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def with_dilation(self, dilation: int) -> "NetworkSpec":
        """Copy with every conv2d dilation forced to ``dilation``."""
        layers = tuple(
            LayerSpec(l.kind, {**l.params, "dilation": dilation}, l.line) if l.kind == "conv2d" else l
            for l in self.layers
        )
        return NetworkSpec(self.name, self.input_shape, layers)


def _parse_value(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def parse_spec(text: str, source="<spec>") -> NetworkSpec:
    name = "custom"
    input_shape = None
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "name":
            if len(rest) != 1:
                raise ParseError(source, lineno, "expected 'name <identifier>'")
            name = rest[0]
            continue
        params = {}
        for tok in rest:
            if "=" not in tok:
                raise ParseError(source, lineno, f"expected key=value, got {tok!r}")
            key, value = tok.split("=", 1)
            try:
                params[key] = _parse_value(key, value)
            except ValueError:
                raise ParseError(source, lineno, f"bad value for {key}: {value!r}") from None
        if head == "input":
            try:
                input_shape = (int(params["height"]), int(params["width"]), int(params["channels"]))
            except (KeyError, ValueError):
                raise ParseError(source, lineno, "input needs height=, width=, channels=") from None
            if min(input_shape) < 1:
                raise ParseError(source, lineno, "input dimensions must be >= 1")
            continue
        if head not in KINDS:
            raise ParseError(source, lineno, f"unknown layer kind {head!r}")
        unknown = set(params) - _ALLOWED[head]
        if unknown:
            raise ParseError(source, lineno, f"{head} does not take {sorted(unknown)}")
        layers.append(_with_defaults(LayerSpec(head, params, lineno), source))
    if input_shape is None:
        raise ParseError(source, 1, "missing 'input' line")
    spec = NetworkSpec(name, input_shape, tuple(layers))
    try:
        infer_shapes(spec)
    except ShapeError as exc:
        raise ParseError(source, getattr(exc, "line", 1), str(exc)) from None
    return spec


def _with_defaults(layer: LayerSpec, source) -> LayerSpec:
    p = dict(layer.params)
    if layer.kind == "conv2d":
        if "out_channels" not in p or ("kernel" not in p and not {"kernel_h", "kernel_w"} <= set(p)):
            raise ParseError(source, layer.line, "conv2d needs out_channels= and kernel= (or kernel_h=, kernel_w=)")
        k = p.pop("kernel", None)
        p.setdefault("kernel_h", k)
        p.setdefault("kernel_w", k)
        p.setdefault("stride", 1)
        p.setdefault("dilation", 1)
        p.setdefault("padding", "same")
        if p["padding"] not in ("same", "valid"):
            raise ParseError(source, layer.line, f"padding must be same or valid, got {p['padding']!r}")
        if min(p["out_channels"], p["kernel_h"], p["kernel_w"], p["stride"], p["dilation"]) < 1:
            raise ParseError(source, layer.line, "conv2d sizes must be >= 1")
    elif layer.kind == "batchnorm":
        p.setdefault("epsilon", 1e-3)
    elif layer.kind == "maxpool":
        if "pool" not in p:
            raise ParseError(source, layer.line, "maxpool needs pool=")
        p.setdefault("stride", p["pool"])
        if min(p["pool"], p["stride"]) < 1:
            raise ParseError(source, layer.line, "maxpool sizes must be >= 1")
    elif layer.kind == "dropout":
        p.setdefault("rate", 0.0)
        if not 0 <= p["rate"] < 1:
            raise ParseError(source, layer.line, "dropout rate must lie in [0, 1)")
    elif layer.kind == "dense":
        if p.get("units", 0) < 1:
            raise ParseError(source, layer.line, "dense needs units >= 1")
    return LayerSpec(layer.kind, p, layer.line)


def load_spec(path) -> NetworkSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    return parse_spec(path.read_text(encoding="utf-8"), source=path)


def reference_spec(name: str) -> NetworkSpec:
    if name not in REFERENCE_SPECS:
        raise KeyError(f"unknown reference spec {name!r}; choose from {REFERENCE_SPECS}")
    text = resources.files("roadcross.cnn").joinpath("specs", f"{name}.net").read_text(encoding="utf-8")
    return parse_spec(text, source=f"{name}.net")


def _shape_error(layer: LayerSpec, index: int, message: str) -> ShapeError:
    err = ShapeError(f"layer {index} {layer.label}: {message}")
    err.line = layer.line
    return err


def infer_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Output shape of every layer; raises naming the first inconsistent layer."""
    shape: tuple[int, ...] = spec.input_shape
    shapes = []
    for i, layer in enumerate(spec.layers):
        spatial = len(shape) == 3
        if layer.kind == "conv2d":
            if not spatial:
                raise _shape_error(layer, i, f"needs an HWC input, got {shape}")
            kh, kw = layer.kernel_hw
            try:
                oh = ops.conv_output_size(shape[0], kh, layer.get("stride"), layer.get("dilation"), layer.get("padding"))
                ow = ops.conv_output_size(shape[1], kw, layer.get("stride"), layer.get("dilation"), layer.get("padding"))
            except ShapeError as exc:
                raise _shape_error(layer, i, str(exc)) from None
            shape = (oh, ow, layer.get("out_channels"))
        elif layer.kind == "maxpool":
            if not spatial:
                raise _shape_error(layer, i, f"needs an HWC input, got {shape}")
            pool, stride = layer.get("pool"), layer.get("stride")
            if shape[0] < pool or shape[1] < pool:
                raise _shape_error(layer, i, f"pool {pool} larger than input {shape[0]}x{shape[1]}")
            shape = ((shape[0] - pool) // stride + 1, (shape[1] - pool) // stride + 1, shape[2])
        elif layer.kind == "global_avg_pool":
            if not spatial:
                raise _shape_error(layer, i, f"needs an HWC input, got {shape}")
            shape = (shape[2],)
        elif layer.kind == "dense":
            shape = (layer.get("units"),)
        shapes.append(shape)
    return shapes


def validate_spec(spec: NetworkSpec) -> None:
    """Shape chain must hold and the network must end in one sigmoid unit."""
    shapes = infer_shapes(spec)
    if not spec.layers or spec.layers[-1].kind != "sigmoid":
        raise ShapeError(f"{spec.name}: last layer must be sigmoid")
    if int(np.prod(shapes[-1])) != 1:
        raise ShapeError(f"{spec.name}: output has shape {shapes[-1]}, expected a single unit")


def param_shapes(spec: NetworkSpec) -> list[list[tuple[int, ...]]]:
    shapes = infer_shapes(spec)
    out = []
    prev = spec.input_shape
    for layer, shape in zip(spec.layers, shapes):
        if layer.kind == "conv2d":
            kh, kw = layer.kernel_hw
            out.append([(kh, kw, prev[2], layer.get("out_channels")), (layer.get("out_channels"),)])
        elif layer.kind == "batchnorm":
            c = prev[-1]
            out.append([(c,), (c,), (c,), (c,)])
        elif layer.kind == "dense":
            n_in = int(np.prod(prev))
            out.append([(n_in, layer.get("units")), (layer.get("units"),)])
        else:
            out.append([])
        prev = shape
    return out


def init_weights(spec: NetworkSpec, seed: int = 0) -> list[list[np.ndarray]]:
    """He-normal kernels, zero biases and mildly perturbed batchnorm statistics."""
    rng = np.random.default_rng(seed)
    params = []
    for layer, shapes in zip(spec.layers, param_shapes(spec)):
        if layer.kind in ("conv2d", "dense"):
            kshape, bshape = shapes
            fan_in = int(np.prod(kshape[:-1]))
            params.append([rng.normal(0.0, np.sqrt(2.0 / fan_in), kshape), np.zeros(bshape)])
        elif layer.kind == "batchnorm":
            (c,) = shapes[0]
            params.append([rng.uniform(0.8, 1.2, c), rng.normal(0.0, 0.1, c),
                           rng.normal(0.0, 0.1, c), rng.uniform(0.5, 1.5, c)])
        else:
            params.append([])
    return [[p.astype(np.float32).astype(np.float64) for p in group] for group in params]


def save_weights(spec: NetworkSpec, params, path) -> None:
    expected = param_shapes(spec)
    with Path(path).open("wb") as fh:
        for i, (group, shapes) in enumerate(zip(params, expected)):
            if [tuple(np.shape(p)) for p in group] != shapes:
                raise ShapeError(f"layer {i} {spec.layers[i].label}: parameter shapes do not match spec")
            flat = np.concatenate([np.asarray(p).reshape(-1) for p in group]) if group else np.zeros(0)
            fh.write(struct.pack("<Q", flat.size))
            fh.write(flat.astype("<f4").tobytes())


def load_weights(spec: NetworkSpec, path) -> list[list[np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    data = path.read_bytes()
    pos = 0
    params = []
    for i, (layer, shapes) in enumerate(zip(spec.layers, param_shapes(spec))):
        where = f"{path} (layer {i}, spec line {layer.line})"
        if pos + 8 > len(data):
            raise ParseError(path, layer.line, f"{where}: truncated before element count")
        (count,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        want = sum(int(np.prod(s)) for s in shapes)
        if count != want:
            raise ParseError(path, layer.line, f"{where}: {layer.kind} needs {want} values, file has {count}")
        if pos + 4 * count > len(data):
            raise ParseError(path, layer.line, f"{where}: truncated parameter block")
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos += 4 * count
        group, off = [], 0
        for s in shapes:
            n = int(np.prod(s))
            group.append(flat[off:off + n].reshape(s))
            off += n
        params.append(group)
    if pos != len(data):
        raise ParseError(path, 0, f"{path}: {len(data) - pos} trailing bytes after last layer")
    return params


class Network:
    """A spec bound to its parameters. Immutable once built; forward is pure."""

    def __init__(self, spec: NetworkSpec, params):
        validate_spec(spec)
        expected = param_shapes(spec)
        for i, (group, shapes) in enumerate(zip(params, expected)):
            if [tuple(np.shape(p)) for p in group] != shapes:
                raise ShapeError(f"layer {i} {spec.layers[i].label}: parameter shapes do not match spec")
        self.spec = spec
        self.params = [tuple(np.asarray(p, dtype=np.float64) for p in g) for g in params]

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.spec.input_shape

    def forward(self, image) -> float:
        x = np.asarray(image, dtype=np.float64)
        if x.shape != self.spec.input_shape:
            raise ShapeError(f"{self.spec.name}: input shape {x.shape} != {self.spec.input_shape}")
        for i, (layer, group) in enumerate(zip(self.spec.layers, self.params)):
            try:
                x = _apply(layer, group, x)
            except ShapeError as exc:
                raise _shape_error(layer, i, str(exc)) from None
        return float(np.reshape(x, -1)[0])

    def infer(self, image) -> float:
        """Nearest-neighbour resize to the input shape, then forward."""
        h, w, _ = self.spec.input_shape
        return self.forward(ops.resize_nearest(image, h, w))


def _apply(layer: LayerSpec, group, x):
    k = layer.kind
    if k == "conv2d":
        return ops.conv2d(x, group[0], group[1], layer.get("stride"), layer.get("dilation"), layer.get("padding"))
    if k == "batchnorm":
        return ops.batchnorm_infer(x, *group, epsilon=layer.get("epsilon"))
    if k == "relu":
        return ops.relu(x)
    if k == "maxpool":
        return ops.maxpool(x, layer.get("pool"), layer.get("stride"))
    if k == "global_avg_pool":
        return ops.global_avg_pool(x)
    if k == "dense":
        return ops.dense(x, group[0], group[1])
    if k == "sigmoid":
        return ops.sigmoid(x)
    if k == "dropout":
        return ops.dropout_infer(x, layer.get("rate"))
    raise ShapeError(f"unknown layer kind {k}")


def load_network(spec_path, weights_path) -> Network:
    spec = load_spec(spec_path)
    return Network(spec, load_weights(spec, weights_path))


@dataclass(frozen=True)
class ReceptiveField:
    layer: str
    size: tuple[int, int]  # (rows, cols) in input pixels
    jump: tuple[int, int]


def receptive_field(spec: NetworkSpec) -> list[ReceptiveField]:
    """Per-layer receptive field via ``rf += (k_eff - 1) * jump; jump *= stride``.

    Pooling windows count as kernels; a global average pool (or a dense
    layer on a spatial map) is a kernel covering the whole current map.
    """
    rf = [1, 1]
    jump = [1, 1]
    shape: tuple[int, ...] = spec.input_shape
    out = []
    for layer, next_shape in zip(spec.layers, infer_shapes(spec)):
        kernels = None
        if layer.kind == "conv2d":
            kh, kw = layer.kernel_hw
            d = layer.get("dilation")
            kernels = (ops.effective_kernel(kh, d), ops.effective_kernel(kw, d))
            stride = layer.get("stride")
        elif layer.kind == "maxpool":
            kernels = (layer.get("pool"),) * 2
            stride = layer.get("stride")
        elif layer.kind in ("global_avg_pool", "dense") and len(shape) == 3:
            kernels = (shape[0], shape[1])
            stride = 1
        if kernels is not None:
            for ax in (0, 1):
                rf[ax] += (kernels[ax] - 1) * jump[ax]
                jump[ax] *= stride
        out.append(ReceptiveField(layer.label, (rf[0], rf[1]), (jump[0], jump[1])))
        shape = next_shape
    return out


def compute_class_weight(n_unsafe: int, n_safe: int) -> float:
    """Safe-class weight: ratio of unsafe to safe frames in the training split."""
    if n_safe <= 0:
        raise ValueError("safe frame count must be positive")
    if n_unsafe <= 0:
        raise ValueError("unsafe frame count must be positive")
    return n_unsafe / n_safe


def format_class_weight(weight: float) -> str:
    return f"{weight:.2f}"
