"""
Optimal consumption and investment with an illiquid asset liquidated at a random time.
"""

__version__ = "1.0.0"
