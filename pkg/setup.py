"""Build script for the optional compiled kernel backend.

The package is pure Python plus one Cython extension holding the
convolution/pooling kernels.  If Cython or a C compiler is unavailable the
extension is simply skipped and the numpy fallback backend is used at
runtime, so `pip install` never hard-fails on the toolchain.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "eqprop._kernels_c",
                ["src/eqprop/_kernels_c.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
