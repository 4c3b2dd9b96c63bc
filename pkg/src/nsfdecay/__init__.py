"""Spectral laboratory for the compressible Navier-Stokes-Fourier system.

Fourier/Littlewood-Paley infrastructure, Besov norms, the frequency-wise
linear theory with its Lyapunov decay certificate, a Lawson-type pseudo-spectral
solver, and a harness measuring algebraic decay rates.
"""

__version__ = "0.1.0"
