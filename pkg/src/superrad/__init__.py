"""Quantum-jump simulation and pair-correlation theory for pumped superradiant emitters."""

__version__ = "0.1.0"
