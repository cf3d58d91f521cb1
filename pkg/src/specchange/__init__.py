"""Change-point detection for photon-count spectra with MDL-selected penalized Poisson fits."""

__version__ = "0.1.0"
