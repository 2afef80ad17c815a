"""Build script for the optional compiled simulation core.

The package is fully functional without the extension: ``mixflow.engine``
falls back to the pure-Python event loops when ``mixflow.engine._cysim``
is missing.  The extension is therefore built on a best-effort basis —
a missing compiler or Cython must not make the install fail.
"""

import sys

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:  # pragma: no cover - depends on build env
        print(f"mixflow: skipping compiled core ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "mixflow.engine._cysim",
        sources=["src/mixflow/engine/_cysim.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=_extensions())
