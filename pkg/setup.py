import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PERPEX_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "perpex._kernels",
                    ["src/perpex/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # keep m*r + q as two roundings so the fallback matches bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
