"""Spectral Galerkin simulation of the stochastic 3D Navier-Stokes equations
on the periodic box, with numerical certificates for suitable weak
solutions and stationary statistical solutions."""

__version__ = "0.1.0"
