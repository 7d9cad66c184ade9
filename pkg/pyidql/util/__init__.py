"""
This subpackage contains various utility functions, both functions for internal use and convenience utilities for users.
"""
pass
