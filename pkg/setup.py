import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the sampler falls back to numpy
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("MIXLANGEVIN_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "mixlangevin.sampler._ula_core",
                ["src/mixlangevin/sampler/_ula_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
