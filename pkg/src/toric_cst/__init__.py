"""Fixed-source 3D Compton scattering tomography over toric surfaces."""

__version__ = "0.1.0"

from .geometry import ScanConfig, DetectorAngles

__all__ = ["ScanConfig", "DetectorAngles", "__version__"]
