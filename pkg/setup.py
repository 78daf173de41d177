import os

from setuptools import setup

ext_modules = []
if os.environ.get("RSDMC_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pure-numpy install
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "rsdmc._kernels._ckernel",
                    ["src/rsdmc/_kernels/_ckernel.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
