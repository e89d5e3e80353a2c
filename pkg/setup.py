"""Build script: compiles the optional SRP scan kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so failures here should be fixed rather than silenced, but
a source checkout can still be used with ``BEAMKIN_PURE=1``.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "beamkin._srp_kernel",
        sources=["src/beamkin/_srp_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})
else:
    ext_modules = []

setup(ext_modules=ext_modules)
