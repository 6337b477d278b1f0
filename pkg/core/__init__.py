"""
Core simulation and resource allocation components.
"""

__version__ = '1.0.0'
