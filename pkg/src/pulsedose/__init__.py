"""Pulse-modulated feedback dosing for one-compartment kinetics with a Hill effect map."""
