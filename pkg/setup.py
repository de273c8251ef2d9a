"""Builds the optional compiled kernel extension.

The package works without it: ``taen.kernels`` falls back to the NumPy
implementations when the extension is absent or fails to build.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "taen.kernels._ckernels",
                ["src/taen/kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
