"""Maass cusp forms for the modular group: spectrum computation and verification."""
