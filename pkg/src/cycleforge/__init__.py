"""Limit-cycle toolkit for the generalized Rayleigh–Liénard oscillator."""
