import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name, sourcedir=""):
        super().__init__(name, sources=[])
        self.sourcedir = os.fspath(Path(sourcedir).resolve())


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        extdir = (Path.cwd() / self.get_ext_fullpath(ext.name)).parent.resolve()
        cfg = "Debug" if self.debug else "Release"
        build_temp = Path(self.build_temp) / ext.name
        build_temp.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                ext.sourcedir,
                f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={extdir}",
                f"-DPython3_EXECUTABLE={sys.executable}",
                f"-DCMAKE_BUILD_TYPE={cfg}",
                "-DSHADOWNET_BUILD_TESTS=OFF",
                "-DSHADOWNET_PYTHON=ON",
            ],
            cwd=build_temp,
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_shadownet", "-j"],
            cwd=build_temp,
            check=True,
        )


setup(
    packages=["shadownet"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("shadownet._shadownet")],
    cmdclass={"build_ext": CMakeBuild},
)
