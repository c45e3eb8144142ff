"""
Dataset generation, loading and splitting package.
"""
