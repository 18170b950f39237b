# shared/__init__.py
"""
Shared utilities for the fractional Kirchhoff solver
Exceptions, logging, settings and metrics used by every service
"""

__version__ = "1.0.0"
