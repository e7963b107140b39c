"""Finite-key decoy-state BB84 bounds for sources with intensity and polarization flaws."""

__version__ = "0.1.0"
