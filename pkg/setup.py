"""Build the optional Cython kernels; the package falls back to numpy without them."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PIC_SHUFFLE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            Extension(
                "pic_shuffle._kernels",
                ["src/pic_shuffle/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # Keep float rounding identical to the numpy fallback.
                extra_compile_args=["-ffp-contract=off"],
            ),
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
