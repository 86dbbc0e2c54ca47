"""Spoofed-source detection for IXP flow data, built on BGP-derived AS cones."""

__version__ = "0.1.0"
