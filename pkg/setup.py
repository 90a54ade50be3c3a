"""Build script: compiles the optional Cython stepping kernel.

The package works without the extension (a pure-numpy stepper is selected at
import time), so a failed compile only costs speed, not functionality.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "resetfreq.sim._stepper",
                ["src/resetfreq/sim/_stepper.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"resetfreq: skipping Cython kernel build ({exc}); "
          "falling back to the pure-python stepper")

setup(ext_modules=ext_modules)
