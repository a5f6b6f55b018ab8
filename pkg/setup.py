import os
import sys

from setuptools import Extension, setup

# The compiled core is optional: without Cython or a compiler the package
# installs and runs on the numpy fallback.
ext_modules = []
if os.environ.get("RACNN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("racnn: Cython/numpy missing, skipping native kernels", file=sys.stderr)
    else:
        openmp = [] if sys.platform == "darwin" else ["-fopenmp"]
        extensions = [
            Extension(
                "racnn._kernels",
                ["src/racnn/_kernels.pyx"],
                include_dirs=[np.get_include(), "src/racnn"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-march=native"] + openmp,
                extra_link_args=openmp,
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
