from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = [
    Extension(
        "mitoseg._core",
        ["src/mitoseg/_core.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(ext_modules, compiler_directives={"language_level": "3"}),
)
