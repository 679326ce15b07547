"""Classical and quantum-inspired classifiers for X-ray casting defect detection."""

from .errors import QVisionError

__version__ = "0.1.0"

__all__ = ["QVisionError", "__version__"]
