"""Kernel backend selection.

Two interchangeable implementations of the cell forward/backward kernels
exist: the compiled extension (drnn._kernel) and the pure-numpy fallback
(drnn.kernels_py).  The environment variable DRNN_BACKEND picks one:

  auto      compiled if importable, else python (default)
  compiled  require the extension, fail loudly if missing
  python    force the fallback

Selection happens once, at first use.
"""

import os

from . import kernels_py
from .errors import ConfigError

_active = None


def _load(choice):
    if choice == "python":
        return kernels_py
    if choice == "compiled":
        from . import _kernel
        return _kernel
    if choice == "auto":
        try:
            from . import _kernel
            return _kernel
        except ImportError:
            return kernels_py
    raise ConfigError(
        f"unknown DRNN_BACKEND value {choice!r}, expected auto, compiled or python"
    )


def get_backend():
    global _active
    if _active is None:
        choice = os.environ.get("DRNN_BACKEND", "auto").strip().lower()
        try:
            _active = _load(choice)
        except ImportError as exc:
            raise ConfigError(
                "DRNN_BACKEND=compiled but the extension is not built "
                f"(install with pip to compile it): {exc}"
            ) from exc
    return _active


def backend_name():
    return get_backend().name
