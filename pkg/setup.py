"""Build script for the optional compiled grid-scan kernel.

The package works without the extension (a pure-Python fallback is selected
at import time), so the build is marked optional and any compiler failure
degrades to the fallback instead of breaking the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    scan_ext = Extension(
        "accelbench._core._scan",
        sources=["src/accelbench/_core/_scan.pyx"],
        # -ffp-contract=off keeps float results bit-identical to the
        # pure-Python fallback (no fused multiply-add contraction).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    scan_ext.optional = True
    ext_modules = cythonize([scan_ext], language_level="3")

setup(ext_modules=ext_modules)
