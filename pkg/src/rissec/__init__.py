"""Secure max-min beamforming for RIS-assisted downlinks with hardware impairments."""

__version__ = "0.1.0"
