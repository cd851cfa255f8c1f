"""Bohm trajectories in incomplete Mach-Zehnder interferometers."""

from ._backend import COMPILED, backend_name

__version__ = "0.1.0"

__all__ = ["COMPILED", "backend_name", "__version__"]
