"""Quantum phase classification of the ANNNI chain."""
from ._accel import backend_name

__version__ = "0.1.0"
