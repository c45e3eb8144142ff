"""
Test suite for attnreid.
"""
