"""Covariance-assisted CSI feedback: python bindings over the C++ core."""

try:
    from ._covnet import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _covnet import *  # noqa: F401,F403  (build-tree PYTHONPATH layout)

__version__ = "0.1.0"
