"""Build the optional compiled FDTD kernel.

The package works without it: ``helmfno.fdtd`` falls back to the numpy
kernel when the extension is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("HELMFNO_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "helmfno._fdtd_ext",
                    ["src/helmfno/_fdtd_ext.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math / -march=native: keep IEEE ordering so the
                    # compiled and numpy kernels agree bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
