"""Maslov index, symplectic Evans function and eigenvalue counts for traveling pulses."""
__version__ = "0.1.0"
