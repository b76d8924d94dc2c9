"""Numerical checks of Krein-space Dirac operators, their fluctuations and
the gauge models they produce on a periodic Lorentzian lattice."""

__version__ = "0.1.0"
