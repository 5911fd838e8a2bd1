"""Simulator and control library for force/torque positioning of an incurved TMS coil."""
__version__ = "0.1.0"
