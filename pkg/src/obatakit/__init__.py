"""Numerical pseudo-Riemannian geometry for Obata's equation H^omega = -kappa omega g."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["__version__"]
