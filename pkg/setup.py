import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.environ.get("SYMSCAN_SKIP_EXT") != "1":
    extensions = cythonize(
        [
            Extension(
                "symscan._kernels._ckernels",
                sources=[
                    "src/symscan/_kernels/_ckernels.pyx",
                    "src/symscan/_kernels/nnpass.c",
                ],
                include_dirs=[np.get_include(), "src/symscan/_kernels"],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
