import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MAMMOBOT_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "mammobot._kernels",
                    ["src/mammobot/_kernels.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
