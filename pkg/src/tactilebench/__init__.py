"""Simulated visuo-tactile workbench: render depth patches, predict
magnetometer-skin touch signals from them, and recognise objects by touch."""

__version__ = "0.1.0"
