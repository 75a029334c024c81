#!/usr/bin/env python

from setuptools import setup

long_description = """\

mixboost
--------

mixboost builds mixtures of generative models by boosting. Each round reweights \
the training examples that the current mixture covers badly, fits a new \
component to them and mixes it in. The package also holds the exact solvers \
for optimal mixture updates on finite supports, a randomized checker for the \
theory behind them, and a benchmark harness comparing boosted mixtures with \
plain ensembles on Gaussian toy data."""

setup(
    name="mixboost",
    version="0.1.0",
    description="Boosted mixtures of generative models",
    long_description=long_description,
    license="BSD",
    python_requires=">=3.8",
    install_requires=["numpy>=1.22", "scipy>=1.7", "scikit-learn>=1.2"],
    entry_points={"console_scripts": ["mixboost=mixboost.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: BSD License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    keywords="boosting mixture generative f-divergence",
    packages=("mixboost",),
)
