"""Simulation and linear-stability toolkit for a hybrid tumour-microenvironment model."""

__version__ = "0.1.0"
