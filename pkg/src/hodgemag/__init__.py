"""Coexact spectra, magnetic critical values, magnetic flows, shadowing and stable-area bounds."""

__version__ = "0.1.0"
