"""Pedestrian trajectory forecasting with a recursive social behavior graph."""

from .config import Config
from .model import Batch, RSBGModel

__version__ = "0.1.0"

__all__ = ["Batch", "Config", "RSBGModel", "__version__"]
