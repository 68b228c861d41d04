"""Pedestrian orientation estimation with 2D/3D dimension feedforward."""

try:
    from ._ffnet import *  # noqa: F401,F403
    from ._ffnet import __doc__ as _native_doc  # noqa: F401
except ImportError:
    # In-tree builds place the extension next to, not inside, the package.
    from _ffnet import *  # noqa: F401,F403

__version__ = "0.1.0"
