from setuptools import setup, find_packages

setup(
    name="cosmic-bell-analysis",
    version="0.1.0",
    author="Samanwaya Ghosh",
    author_email="samanwayaghosh938@gmail.com",
    packages=find_packages(include=["src", "src.*"]),
    entry_points={"console_scripts": ["cosmic-bell=src.cli:main"]},
)
