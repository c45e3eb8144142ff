"""
Results store: evaluated runs and their metrics.
"""
