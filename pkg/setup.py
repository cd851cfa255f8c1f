from setuptools import Extension, setup
from Cython.Build import cythonize

ext = Extension(
    "mzbohm._kernels",
    ["src/mzbohm/_kernels.pyx"],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([ext], language_level=3))
