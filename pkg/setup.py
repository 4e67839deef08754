import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SUCCREF_NO_EXT", "") in ("", "0"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("succref._scan", ["src/succref/_scan.pyx"], include_dirs=[np.get_include()])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
