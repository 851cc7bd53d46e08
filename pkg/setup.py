import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the compiled rasterizer kernel, degrading to pure Python on failure.

    The package is fully functional without the extension; scenelayout.raster
    falls back to the numpy kernel at import time.
    """

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing, etc.
            warnings.warn(f"skipping compiled rasterizer kernel: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping compiled rasterizer kernel: {exc}")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "scenelayout.raster._kernels",
        ["src/scenelayout/raster/_kernels.pyx"],
        # FP contraction must stay off so the compiled kernel is bit-identical
        # to the numpy fallback (no FMA fusing of a*b+c).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
