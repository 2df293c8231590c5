import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "stochdg._kernels",
        ["src/stochdg/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

if os.environ.get("STOCHDG_NO_EXT"):
    extensions = []

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
