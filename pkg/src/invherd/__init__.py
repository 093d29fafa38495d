"""Inventory-variation analytics: firm strategy classification, correlation spectra, causality and herding."""

__version__ = "0.1.0"
