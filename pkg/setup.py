from setuptools import setup, find_packages

setup(
    name="superres-moments",
    version="0.1.0",
    description="Method-of-moments sensitivity and resolution limits for two-source superresolution",
    author="Your Name",
    author_email="your.email@example.com",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "pyyaml",
        "mcp<2",
    ],
    extras_require={
        "tests": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "superres=superres_moments.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Physics",
    ],
)
