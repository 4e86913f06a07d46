"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a numpy/scipy fallback is selected
at import time), so a failed compile is downgraded to a warning.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/acta/_kernels_cy.pyx",
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
except Exception as exc:  # pragma: no cover - build-env dependent
    warnings.warn(f"Cython kernel build skipped ({exc}); pure-Python kernels will be used")

setup(ext_modules=ext_modules)
