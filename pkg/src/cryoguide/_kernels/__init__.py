"""Splatting kernel backend selection.

Prefers the compiled Cython extension and falls back to the pure-numpy
implementation. Set CRYOGUIDE_KERNELS=py (or =cy) to force a backend;
forcing `cy` raises if the extension is missing.
"""

import os

from . import _splat_py

_forced = os.environ.get("CRYOGUIDE_KERNELS", "").strip().lower()

if _forced == "py":
    BACKEND = "python"
    splat = _splat_py.splat
    splat_grad = _splat_py.splat_grad
else:
    try:
        from . import _splat_cy

        BACKEND = "cython"
        splat = _splat_cy.splat
        splat_grad = _splat_cy.splat_grad
    except ImportError:
        if _forced == "cy":
            raise
        BACKEND = "python"
        splat = _splat_py.splat
        splat_grad = _splat_py.splat_grad

__all__ = ["splat", "splat_grad", "BACKEND"]
