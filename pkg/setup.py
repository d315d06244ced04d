"""Build the optional compiled DP kernel.

If Cython or a C compiler is unavailable the package still installs and the
numpy fallback in ``miocrl._dpcore_py`` is used.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension(
            "miocrl._dpcore",
            ["src/miocrl/_dpcore.pyx"],
            include_dirs=[np.get_include()],
            # no FMA contraction: results must match the numpy fallback bit for bit
            extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
            extra_link_args=["-fopenmp"],
            optional=True,
        )],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
