"""Verification laboratory for weighted harmonic analysis and degenerate
parabolic/elliptic estimates on a half space."""

__version__ = "0.1.0"
