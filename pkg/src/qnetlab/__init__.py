"""Fidelity lab for noisy teleportation and repeater chains."""

__version__ = "0.1.0"
