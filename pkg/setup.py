"""Build script for the optional compiled kernel backend.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes training runs much faster.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "pdmplab._core",
        ["src/pdmplab/_core.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off: no FMA contraction, so results are bit-identical
        # to the numpy fallback (same multiply-then-add rounding sequence).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
