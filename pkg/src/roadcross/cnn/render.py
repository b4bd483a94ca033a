"""Rasterise simulated boxes into network-sized RGB frames.

Pixels are sampled exactly as a nearest-neighbour resize of the full-resolution
rendering would sample them, without materialising the full frame.
"""

from __future__ import annotations

import numpy as np

from .ops import nearest_indices

ROAD = (0.35, 0.35, 0.38)
VEHICLE = (0.85, 0.80, 0.70)


def render_frame(boxes, frame_width: int, frame_height: int, height: int, width: int) -> np.ndarray:
    rows = nearest_indices(frame_height, height)
    cols = nearest_indices(frame_width, width)
    img = np.empty((height, width, 3))
    img[:] = ROAD
    for box in boxes:
        x0, y0, x1, y1 = box.xyxy if hasattr(box, "xyxy") else box
        r = (rows >= y0) & (rows < y1)
        c = (cols >= x0) & (cols < x1)
        img[np.ix_(r, c)] = VEHICLE
    return img
