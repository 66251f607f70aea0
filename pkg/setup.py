from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np

extensions = [
    Extension(
        name="rsma_hfpi._kernels",
        sources=["src/rsma_hfpi/_kernels.pyx"],
        include_dirs=[np.get_include()],
        language="c",
    ),
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": 3}))
