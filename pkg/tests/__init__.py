"""
This package contains the tests for L{pyidql}
"""
pass
