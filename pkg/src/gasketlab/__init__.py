"""Analysis, nonlinear diffusion and zero-range particles on Sierpinski gasket graphs."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    DivergenceError,
    DomainError,
    GasketError,
    LevelMismatchError,
    NumericalError,
    SolverError,
    TruncationError,
    ValidationError,
)
from .gasket import Address, GasketGraph, TriangleBlock, block_of, build_graph  # noqa: E402

__all__ = [
    "__version__",
    "Address",
    "GasketGraph",
    "TriangleBlock",
    "block_of",
    "build_graph",
    "GasketError",
    "ValidationError",
    "CapacityError",
    "LevelMismatchError",
    "DomainError",
    "NumericalError",
    "SolverError",
    "DivergenceError",
    "TruncationError",
]
