"""Build the optional compiled kernels; the package falls back to numpy without them."""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing etc.
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def _arch_flags():
    # vector math (glibc libmvec) needs wide SIMD; BELIEFBO_ARCH="" disables it
    arch = os.environ.get("BELIEFBO_ARCH", "native")
    return [f"-march={arch}"] if arch else []


def _extensions():
    if os.environ.get("BELIEFBO_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "beliefbo._kernels_ext",
        ["src/beliefbo/_kernels_ext.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffast-math", *_arch_flags()],
        extra_link_args=["-lmvec", "-lm"],
        define_macros=[("_GNU_SOURCE", None), ("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
