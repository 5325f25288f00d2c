"""Variational string equation toolkit for Hamiltonian perturbations of scalar conservation laws."""

__version__ = "0.1.0"
