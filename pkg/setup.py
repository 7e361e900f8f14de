"""Build script for the optional compiled splatting kernels.

The extension is marked optional: if no C toolchain (or Cython) is available
the install still succeeds and the package falls back to the pure-numpy
implementation selected at import time in cryoguide._kernels.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cryoguide._kernels._splat_cy",
                ["src/cryoguide/_kernels/_splat_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
