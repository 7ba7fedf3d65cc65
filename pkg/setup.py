"""Build script for the optional compiled scan kernel.

The package works without the extension: ``acervo.quality`` falls back to
the pure-Python kernel when ``acervo.quality._kernel`` is missing. Set
ACERVO_PURE_PYTHON=1 to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try to build the accelerator; fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, broken toolchain, ...
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(f"WARNING: compiled scan kernel not built ({exc}); "
              f"the pure-Python kernel will be used instead")


def extensions():
    if os.environ.get("ACERVO_PURE_PYTHON"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("WARNING: Cython unavailable; building without the compiled scan kernel")
        return []
    return cythonize(
        [Extension("acervo.quality._kernel", ["src/acervo/quality/_kernel.pyx"])],
        language_level="3",
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
