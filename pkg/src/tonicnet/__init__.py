"""Chord-then-note modelling of four-part chorales with a from-scratch GRU."""

__version__ = "0.1.0"
