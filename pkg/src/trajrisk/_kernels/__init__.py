"""Numeric kernel backends.

Two implementations of the same training kernel live here: a compiled
Cython core (built at install time when a C toolchain is available) and
a pure-numpy fallback.  Selection happens at import, overridable with
the ``TRAJRISK_BACKEND`` environment variable (``auto``, ``compiled``
or ``python``) or at runtime via :func:`set_backend`.
"""

from __future__ import annotations

import os

from . import _ref

try:
    from . import _core
except ImportError:  # extension not built on this install
    _core = None

_ALIASES = {
    "python": "python", "ref": "python", "numpy": "python",
    "compiled": "compiled", "cython": "compiled", "core": "compiled",
}

_active = None
_active_name = ""


def available_backends():
    names = ["python"]
    if _core is not None:
        names.insert(0, "compiled")
    return tuple(names)


def set_backend(name):
    """Select the kernel backend; returns the active backend name."""
    global _active, _active_name
    key = str(name).strip().lower()
    if key in ("auto", ""):
        key = "compiled" if _core is not None else "python"
    else:
        key = _ALIASES.get(key)
    if key is None:
        raise ValueError(f"unknown kernel backend {name!r}")
    if key == "compiled":
        if _core is None:
            raise RuntimeError(
                "compiled kernel backend requested but the extension "
                "trajrisk._kernels._core is not built")
        _active = _core
    else:
        _active = _ref
    _active_name = key
    return _active_name


def active_backend():
    return _active_name


def mdn_loss_grad(W1, b1, W2, b2, feats, rot_cs, pos, fut, weights,
                  n_modes, horizon, denom):
    return _active.mdn_loss_grad(W1, b1, W2, b2, feats, rot_cs, pos, fut,
                                 weights, n_modes, horizon, denom)


set_backend(os.environ.get("TRAJRISK_BACKEND", "auto"))
