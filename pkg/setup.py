import os

import numpy as np
from setuptools import Extension, setup

# the compiled kernel is optional: the package falls back to NumPy without it
ext_modules = []
if os.environ.get("HYBRIDSE_NO_EXT", "") in ("", "0"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hybridse._ism_core",
                ["src/hybridse/_ism_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
