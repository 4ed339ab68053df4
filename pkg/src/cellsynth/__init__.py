"""Synthetic brightfield microscopy toolkit.

Phantom image generation, a from-scratch diffusion model (training and
sampling on a hand-rolled autodiff engine), fluorescence/model-assisted
auto-labeling, real/synthetic dataset mixing, a center-heatmap cell
detector with COCO-style mAP evaluation, and a realism survey service.
"""

__version__ = "0.1.0"

from .boxes import BBox, clip_box, iou
from .errors import ConfigurationError, ShapeError, SizeError
from .manifest import DatasetManifest, ManifestRecord

__all__ = [
    "__version__",
    "BBox",
    "clip_box",
    "iou",
    "ConfigurationError",
    "ShapeError",
    "SizeError",
    "DatasetManifest",
    "ManifestRecord",
]
