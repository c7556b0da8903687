"""This is a legacy configration file used for defining a package."""

from pathlib import Path

from setuptools import find_packages, setup

from versions import VERSION

with Path("README.md").open(encoding="utf-8") as file:
    description = file.read()

with Path("requirements.txt").open(encoding="utf-8") as f:
    requirements = f.read().splitlines()

setup(
    name="SpatialRegretToolkit",
    version=VERSION,
    description="Synthesis and evaluation of spatial regret controllers for networked systems",
    long_description=description,
    long_description_content_type="text/markdown",
    license="CC-BY-SA",
    python_requires=">=3.10",
    packages=find_packages(),
    py_modules=[
        "REGRET_DEFAULTS",
        "NetworkedPlant",
        "NetworkedPlantStabilizationPart",
        "NetworkedPlantStructurePart",
        "bench",
        "conic",
        "main",
        "netgraph",
        "regret",
        "run_config",
        "slsadmm",
        "sstf",
        "synth",
        "versions",
    ],
    include_package_data=True,
    install_requires=requirements,
    entry_points={"console_scripts": ["spatial-regret=main:main"]},
)
