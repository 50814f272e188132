"""Simulation and exact-oracle checks for random walks in dynamical i.i.d. environments."""

__version__ = "0.1.0"
