"""Road-crossing safety assessment from dashcam-style pedestrian video.

Synthetic scene generation, IoU tracking, region-grid features, weighted
linear SVMs, a small numpy CNN inference engine and the assistant's
decision loop.
"""

__version__ = "0.1.0"
