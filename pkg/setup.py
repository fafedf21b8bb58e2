from setuptools import find_packages, setup

setup(
    name="product-ecosystem",
    version="0.1.0",
    packages=find_packages(include=["ecosystem", "ecosystem.*"]),
)
