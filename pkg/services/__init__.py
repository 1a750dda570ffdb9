"""Magnon-transfer services package."""
