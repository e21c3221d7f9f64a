import re
from pathlib import Path

from setuptools import find_namespace_packages, setup  # type: ignore

about = (Path("hsnvad") / "__about__.py").read_text()
version = re.search(r"__version__ = [\"']([\d.]+)[\"']", about)
assert version

setup(
    name="hsnvad",
    version=version.group(1),
    description="human-scene network for weakly supervised video anomaly detection",
    packages=find_namespace_packages(include=["hsnvad*"]),
    package_data={"hsnvad": ["py.typed"]},
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.22",
        "scikit-learn>=1.1",
        "PyYAML>=6.0",
    ],
    entry_points={"console_scripts": ["hsnvad=hsnvad.cli:main"]},
)
