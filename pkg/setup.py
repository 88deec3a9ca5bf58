"""Build script: compiles the optional pairwise message-passing extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install. Set BCRF_REQUIRE_EXTENSION=1 to make failures fatal.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"bcrf: cython/numpy unavailable ({exc}); skipping compiled kernels",
              file=sys.stderr)
        return []
    from setuptools import Extension

    ext = Extension(
        "bcrf._pairwise",
        sources=["src/bcrf/_pairwise.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


class optional_build_ext(build_ext):
    """Build the extension if possible; fall back to pure python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._fail(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._fail(exc)

    def _fail(self, exc):
        if os.environ.get("BCRF_REQUIRE_EXTENSION"):
            raise
        print(f"bcrf: compiled kernels disabled ({exc}); "
              "the numpy fallback will be used", file=sys.stderr)


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
