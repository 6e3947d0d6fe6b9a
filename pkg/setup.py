import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back at import
    cythonize = None

DIRECTIVES = {
    "language_level": "3",
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
    "initializedcheck": False,
}

ext_modules = []
if cythonize is not None and not os.environ.get("EDGESCHED_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "edgesched._kernels",
                ["src/edgesched/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives=DIRECTIVES,
    )

setup(ext_modules=ext_modules)
