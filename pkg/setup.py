import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-python install; fan.adcore.kernels falls back to numpy
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("fan.adcore._ckernels", ["src/fan/adcore/_ckernels.pyx"],
                   include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
