from setuptools import setup, find_packages
from os import path

__version__ = "0.1.0"

here = path.abspath(path.dirname(__file__))

with open(path.join(here, "README.md"), encoding="utf-8") as f:
    long_description = f.read()

with open(path.join(here, "requirements.txt"), encoding="utf-8") as f:
    dependencies = [line.strip() for line in f if line.strip()]

setup(
    name="pyssdsgd",
    version=__version__,
    description="Parameter-server training with sparse weight pulls (SSD-SGD), a pipeline timing model and a discrete-event simulator.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    classifiers=[
      "Development Status :: 3 - Alpha",
      "Intended Audience :: Science/Research",
      "Programming Language :: Python :: 3.9",
    ],
    packages=find_packages(exclude=["tests*"]),
    install_requires=dependencies,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["ssdsgd = ssdsgd.xcli.cli:main"]},
    python_requires=">=3.9",
)
