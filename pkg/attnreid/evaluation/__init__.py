"""
Retrieval and attention evaluation plus result exports.
"""
