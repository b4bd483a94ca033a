from .network import (
    REFERENCE_SPECS,
    LayerSpec,
    Network,
    NetworkSpec,
    ReceptiveField,
    compute_class_weight,
    format_class_weight,
    infer_shapes,
    init_weights,
    load_network,
    load_spec,
    load_weights,
    parse_spec,
    receptive_field,
    reference_spec,
    save_weights,
    validate_spec,
)
from .ops import (
    ShapeError,
    batchnorm_infer,
    conv2d,
    conv2d_direct,
    dense,
    dropout_infer,
    global_avg_pool,
    maxpool,
    relu,
    resize_nearest,
    sigmoid,
)
from .render import render_frame

__all__ = [
    "REFERENCE_SPECS", "LayerSpec", "Network", "NetworkSpec", "ReceptiveField", "ShapeError",
    "batchnorm_infer", "compute_class_weight", "conv2d", "conv2d_direct", "dense", "dropout_infer",
    "format_class_weight", "global_avg_pool", "infer_shapes", "init_weights", "load_network",
    "load_spec", "load_weights", "maxpool", "parse_spec", "receptive_field", "reference_spec",
    "relu", "render_frame", "resize_nearest", "save_weights", "sigmoid", "validate_spec",
]
