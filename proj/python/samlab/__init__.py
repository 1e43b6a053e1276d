"""Sharpness-aware training and calibration laboratory."""

try:
    from ._core import *  # noqa: F401,F403  (installed package layout)
    from ._core import __version__
except ImportError:  # pragma: no cover - in-build test layout
    from _core import *  # noqa: F401,F403
    from _core import __version__
