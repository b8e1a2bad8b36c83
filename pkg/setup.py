"""Build script for the optional compiled kernel extension.

The extension accelerates the fused numerical kernels in
``dpfim.kernels``. If no C compiler (or Cython) is available the build
degrades gracefully and the package falls back to the NumPy kernels at
import time, so installation never fails because of the extension.
"""

import logging
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger("dpfim.setup")


class optional_build_ext(build_ext):
    """Build the extension if possible; warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            log.warning("skipping compiled kernels (%s); using NumPy fallback", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            log.warning("failed to compile %s (%s); using NumPy fallback", ext.name, exc)


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        log.warning("Cython/NumPy unavailable (%s); compiled kernels disabled", exc)
        return []
    ext = Extension(
        "dpfim.kernels._fused",
        ["src/dpfim/kernels/_fused.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"] if sys.platform != "win32" else ["/O2"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
