"""Calibration and simulation tools for prediction sets with L^k control of
function-weighted conditional miscoverage."""

__version__ = "0.1.0"
