"""This module contains the version number and the library versions recorded with every run."""

import os
import platform
from importlib.metadata import PackageNotFoundError, version

VERSION = "0.1.0"

TrackedLibraries = ["numpy", "scipy", "cvxpy", "clarabel", "networkx", "pandas", "pydantic"]


def library_versions() -> dict[str, str | None]:
    """Python and numeric library versions, None for libraries that are not installed."""
    result: dict[str, str | None] = {"python": platform.python_version()}
    for name in TrackedLibraries:
        try:
            result[name] = version(name)
        except PackageNotFoundError:
            result[name] = None
    return result


if __name__ == "__main__":
    os.environ["VERSION"] = VERSION
