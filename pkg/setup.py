"""Build the optional compiled kernel ``fedosov._ckernels``.

The extension links against the GMP copy that gmpy2 itself loads, so
numbers created on either side share one allocator.  If Cython or the GMP
headers are unavailable the package installs without it and falls back to
the pure-Python kernels.
"""

from __future__ import annotations

import glob
import os

from setuptools import setup


def _extensions() -> list:
    try:
        import gmpy2
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    pkg_dir = os.path.dirname(gmpy2.__file__)
    bundled = sorted(glob.glob(os.path.join(pkg_dir, os.pardir, "gmpy2.libs", "libgmp-*.so*")))
    link: dict = {}
    if bundled:
        lib_dir = os.path.realpath(os.path.dirname(bundled[0]))
        link = {"library_dirs": [lib_dir], "runtime_library_dirs": [lib_dir],
                "extra_link_args": [f"-l:{os.path.basename(bundled[0])}"]}
    else:
        link = {"libraries": ["gmp"]}
    ext = Extension("fedosov._ckernels", ["src/fedosov/_ckernels.pyx"],
                    include_dirs=[pkg_dir], language="c++", extra_compile_args=["-O2"], **link)
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=_extensions())
