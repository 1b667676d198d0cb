"""contourforge: boundary-refinement losses, level-set evolution and evaluation."""

from .errors import DivergenceError, DomainError, FormatError
from .raster import BinaryMask, Polygon, ScalarField, StructuringElement

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "Polygon",
    "ScalarField",
    "StructuringElement",
    "DomainError",
    "FormatError",
    "DivergenceError",
    "__version__",
]
