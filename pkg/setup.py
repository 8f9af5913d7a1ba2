"""Builds the optional compiled kernels; the package falls back to numpy if absent."""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "landmark_rca._kernels._ck",
                sources=["src/landmark_rca/_kernels/_ck.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    # No Cython toolchain: install pure-python only, kernels fall back at import.
    extensions = []

setup(ext_modules=extensions)
