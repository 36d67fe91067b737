"""Build hook for the optional compiled kernels.

The package is fully functional without the extension; `vlpipe.kernels`
falls back to the pure-Python implementation when the compiled module is
missing. Set VLPIPE_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("VLPIPE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "vlpipe.kernels._speedups",
                    sources=["src/vlpipe/kernels/_speedups.pyx"],
                    optional=True,
                )
            ],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
