"""
Training loop, phase schedules and checkpoint persistence.
"""
