"""Hybrid microphone/beamformer speech enhancement for wearable arrays."""
from hybridse.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
