"""Build the optional compiled kernels.

If Cython or a C compiler is unavailable the package still installs and
``advworkbench.kernels`` falls back to the numpy implementation.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "advworkbench._native",
                ["src/advworkbench/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
