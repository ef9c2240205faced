"""Model-free state estimation for a two-chamber soft finger."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
