import os

from setuptools import setup

ext_modules = []
if os.environ.get("SPS2CS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "sps2cs.kernels._ckernels",
                    ["src/sps2cs/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
