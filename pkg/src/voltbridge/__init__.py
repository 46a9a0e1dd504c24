"""Volterra Gaussian processes: simulation, measure-preserving transforms,
bridges and the two-sided Fourier-Laguerre expansion on a discrete grid."""

__version__ = "0.1.0"
