import os

from setuptools import setup

PYX = "src/robopt/furuta/_core.pyx"

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    if os.path.exists(PYX):
        ext_modules = cythonize(
            [
                Extension(
                    "robopt.furuta._core",
                    [PYX],
                    include_dirs=[np.get_include()],
                )
            ],
            language_level=3,
        )
except ImportError:
    # No Cython available: the pure-Python rollout kernel is used instead.
    pass

setup(ext_modules=ext_modules)
