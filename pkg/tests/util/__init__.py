"""
Tests for L{pyidql.util}.
"""
pass
