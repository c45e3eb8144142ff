"""
Utility functions and classes package.
"""
