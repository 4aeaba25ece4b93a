"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy
implementation is the fallback. Set VARCAL_BACKEND=python or
VARCAL_BACKEND=compiled to force one (forcing `compiled` fails loudly
rather than silently falling back).
"""

from __future__ import annotations

import importlib
import os

from .errors import ConfigError


def _load(name: str):
    return importlib.import_module(f".{name}", package=__package__)


def select_backend():
    forced = os.environ.get("VARCAL_BACKEND", "").strip().lower()
    if forced == "python":
        return _load("_kernels_py")
    if forced == "compiled":
        return _load("_kernels")
    if forced:
        raise ConfigError(f"VARCAL_BACKEND must be 'compiled' or 'python', got {forced!r}")
    try:
        return _load("_kernels")
    except ImportError:
        return _load("_kernels_py")


kernels = select_backend()

BACKEND_NAME: str = kernels.BACKEND_NAME
run_weighted_conformal = kernels.run_weighted_conformal
run_aci = kernels.run_aci
