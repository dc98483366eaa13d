"""Size-constrained optimal hypersurface decision trees."""

from .exceptions import (
    CorruptModelError,
    CSVParseError,
    DimensionTooLargeError,
    HODTError,
    InfeasibleConfigurationError,
    InvalidParamsError,
)
from .geometry import Dataset, embedding_dim, veronese_embed
from .solver import SearchStats, Solution, hodt, odt_size_naive

__version__ = "0.1.0"

__all__ = [
    "CorruptModelError",
    "CSVParseError",
    "Dataset",
    "DimensionTooLargeError",
    "HODTError",
    "InfeasibleConfigurationError",
    "InvalidParamsError",
    "SearchStats",
    "Solution",
    "embedding_dim",
    "hodt",
    "odt_size_naive",
    "veronese_embed",
]
