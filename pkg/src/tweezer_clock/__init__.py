"""Simulation and analysis toolkit for a tweezer-based atomic clock interferometer."""
from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["__version__"]
