"""Build script: compiles the geometry kernels when Cython and a C compiler
are available, otherwise installs with the pure-numpy backend only."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("BILAYOUT_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "bilayout._kernels._native",
                    ["src/bilayout/_kernels/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
