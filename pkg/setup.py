"""Build script for the optional compiled PIPG kernel.

The extension is marked optional: if it fails to build (no compiler, no
Cython), the package installs anyway and the solver falls back to the
pure-numpy kernel at import time.
"""

import os

from setuptools import Extension, setup

KERNEL_SRC = os.path.join("src", "seco", "_pipg_kernel.pyx")

extensions = []
if os.path.exists(KERNEL_SRC):
    try:
        from Cython.Build import cythonize

        extensions = cythonize(
            [Extension("seco._pipg_kernel", [KERNEL_SRC], optional=True)],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        pass

setup(ext_modules=extensions)
