"""
Exceptions and helpers
"""
