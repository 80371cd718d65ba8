"""nvscope: microwave near-field simulation and Rabi-map analysis for
widefield NV-diamond magnetometry.

The package models phasor currents on planar microwave devices, computes
the vector near field they radiate, projects it onto the circular
polarization components seen by a tilted NV ensemble, synthesizes the
contrast image cubes a lock-in camera would record, and fits those cubes
pixel by pixel to recover calibrated field amplitude maps.
"""

__version__ = "0.1.0"
