import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the accelerated engine if possible, otherwise fall back to
    the pure-Python implementation selected at import time."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing: wheel still works
            print("WARNING: could not build the compiled engine (%s); "
                  "the pure-Python engine will be used." % exc,
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print("WARNING: skipping %s (%s)" % (ext.name, exc),
                  file=sys.stderr)


ext_modules = []
try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [
            Extension(
                "evfleet._engine",
                ["src/evfleet/_engine.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    print("WARNING: Cython not available; building without the compiled "
          "engine.", file=sys.stderr)

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
