import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled kernels free of fused multiply-adds so
# they produce the exact same values as the pure-Python fallback, which rounds
# every multiply and add separately.
extensions = [
    Extension(
        "graphdiff.ops._fastkernels",
        ["src/graphdiff/ops/_fastkernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
