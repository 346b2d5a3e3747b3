"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any build failure here downgrades to a warning
instead of aborting the install.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/gazekit/_kernels/_native.pyx",
        language_level="3",
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
except Exception as exc:  # pragma: no cover - build-env dependent
    warnings.warn(f"skipping native kernel build, using pure-python fallback: {exc}")
    ext_modules = []

setup(ext_modules=ext_modules)
