"""Simulation and analysis toolkit for microring-sourced multiphoton photonic processors."""

__version__ = "0.1.0"
