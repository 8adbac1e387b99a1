"""Brownian motion in Poissonian random potentials: samplers, Feynman-Kac estimators, spectra and rate functions."""

__version__ = "0.1.0"
