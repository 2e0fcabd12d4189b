"""Build glue: compile the _sessionlab extension with CMake during pip builds.

The native build is owned by CMakeLists.txt; this only points setuptools at
it. `pip install -e . --no-build-isolation` leaves the module next to the
package sources (python/sessionlab), a plain install copies it into the wheel.
"""

import os
import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        cfg = "Release" if not self.debug else "Debug"
        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                f"-DCMAKE_BUILD_TYPE={cfg}",
                f"-DPython3_EXECUTABLE={sys.executable}",
                "-DSESSIONLAB_PYTHON=ON",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_sessionlab",
             "-j", str(os.cpu_count() or 2)],
            check=True,
        )

        # the cmake build drops the module into python/sessionlab; stage it
        # wherever setuptools expects this extension to land
        built = next((source_dir / "python" / "sessionlab").glob("_sessionlab.*"))
        target = Path(self.get_ext_fullpath(ext.name))
        target.parent.mkdir(parents=True, exist_ok=True)
        if built.resolve() != target.resolve():
            shutil.copy2(built, target)


setup(
    ext_modules=[CMakeExtension("sessionlab._sessionlab")],
    cmdclass={"build_ext": CMakeBuild},
)
