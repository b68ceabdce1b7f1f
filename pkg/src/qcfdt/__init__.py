"""Quantum-chaotic relaxation: random-matrix and spin-chain models, exact
dynamics, analytic predictions for decay and equilibrium fluctuations."""

__version__ = "0.1.0"
