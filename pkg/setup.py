"""Build script for the optional compiled scan kernel.

The package works without the extension (a NumPy fallback is selected at
import time); building it speeds up the selective-scan recurrence, the hot
inner loop of training.  Build in place with:

    python setup.py build_ext --inplace
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "sizerl.kernels._scanext",
                ["src/sizerl/kernels/_scanext.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
