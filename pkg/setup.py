"""Build script. The Cython extension is optional: if compilation is not
possible the package installs anyway and falls back to the pure-Python
kernels at import time."""

from __future__ import annotations

import os

from setuptools import setup

ext_modules = []
if os.environ.get("VARCAL_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "varcal._kernels",
                    sources=["src/varcal/_kernels.pyx"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
