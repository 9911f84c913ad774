"""Worst-case robust multicell coordinated beamforming."""

__version__ = "0.1.0"
