"""Neural-ODE system identification with Jacobian-informed training and
small-signal stability evaluation.

Thin wrapper over the compiled extension; everything lives in `_lfinode`.
"""

from ._lfinode import *  # noqa: F401,F403
from ._lfinode import __doc__ as _native_doc

__all__ = [name for name in dir() if not name.startswith("_")]
__doc__ = _native_doc
