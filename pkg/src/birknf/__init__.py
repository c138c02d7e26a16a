"""Cluster-indexed Birkhoff normal forms for truncated Hamiltonian PDE systems."""

__version__ = "0.1.0"
