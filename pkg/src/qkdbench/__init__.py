"""Quantum-hacking assessment toolkit for a decoy-state BB84 link."""

__version__ = "0.1.0"

from .errors import AbortBlock, ConfigInvalid, MissingSpectralData, QkdBenchError  # noqa: E402

__all__ = ["__version__", "AbortBlock", "ConfigInvalid", "MissingSpectralData", "QkdBenchError"]
