"""Classical vs simulated-quantum kernel SVMs under an identical preprocessing and fold protocol."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InvariantViolation, QkswapError

__all__ = ["ConfigError", "DataError", "InvariantViolation", "QkswapError", "__version__"]
