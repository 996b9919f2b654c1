from setuptools import find_packages, setup

from mfgpen import __version__

setup(
    name="mfgpen",
    version=__version__,
    description="Penalized linear-quadratic extended mean field games with a terminal constraint",
    long_description=open("README.md", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.8",
    install_requires=["numpy>=1.20.0", "scipy>=1.6.0", "click>=8.0.0", "rich>=10.0.0"],
    extras_require={"dev": ["pytest>=6.0.0", "pylint>=2.8.0", "black>=21.5b2"]},
    entry_points={"console_scripts": ["mfgpen=cli.main:main"]},
)
