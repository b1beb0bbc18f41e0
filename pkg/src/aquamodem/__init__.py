"""Chirp-spread-spectrum acoustic text modem with an underwater channel simulator
and tools for generating and evaluating corrupted-message recovery corpora."""

__version__ = "0.1.0"
