"""HTM-indexed sky catalog engine: spatial index, columnar store, loader and queries."""
from .errors import SkycatError

__version__ = "0.1.0"

__all__ = ["SkycatError", "__version__"]
