import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "entroflow._core",
                ["src/entroflow/_core.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Cython unavailable: the package still works through the numpy backend.
    extensions = []

setup(ext_modules=extensions)
