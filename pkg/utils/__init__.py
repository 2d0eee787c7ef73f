"""Utility modules for the LOB exchange simulator."""
