"""Stokes-Biot interface-multiplier simulator."""
