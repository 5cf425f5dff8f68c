"""Build script for the compiled kernel extension.

The extension links against numpy's bit-generator distribution library so
both backends share the exact same sampling primitives. Set TAILAR_NO_EXT=1
to skip the extension and install the pure-Python backend only.
"""
import os

from setuptools import setup


def _extensions():
    if os.environ.get("TAILAR_NO_EXT"):
        return []
    import numpy as np
    import numpy.random
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "tailar._ckernels",
        sources=["src/tailar/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[os.path.join(os.path.dirname(numpy.random.__file__),
                                   "lib")],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps the C arithmetic bit-identical to numpy's
        # non-fused elementwise operations (see _pykernels.py).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())
