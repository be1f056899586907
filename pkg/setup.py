import sys

from setuptools import Extension, setup

# The compiled kernels are an optional speedup: if Cython or a C toolchain is
# unavailable the package installs anyway and selects the pure-Python backend
# at import time.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "memdex._kernels._native",
                ["src/memdex/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; building without compiled kernels", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
