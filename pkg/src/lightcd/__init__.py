"""Linear-time change detection for high-dimensional time series.

Pipeline per epoch: column-sampled PCA of the reference window, a maximum
spanning tree over the PCA coordinates (quadratic dependency measure,
estimated with sign sketches), and a regularised quadratic divergence
between reference and test windows that updates in O(m) per sample.  A
Page-Hinkley test turns the score stream into change reports.
"""

__version__ = "0.1.0"

from .config import DetectorConfig, load_config
from .core import DimensionMismatchError, LightError, ParseError, Sample, SeriesMeta, WindowPair
from .detector import ChangeEvent, LightDetector, calibrate, detect
from .synthgen import GenSpec, generate

__all__ = [
    "ChangeEvent",
    "DetectorConfig",
    "DimensionMismatchError",
    "GenSpec",
    "LightDetector",
    "LightError",
    "ParseError",
    "Sample",
    "SeriesMeta",
    "WindowPair",
    "calibrate",
    "detect",
    "generate",
    "load_config",
]
