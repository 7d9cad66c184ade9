"""
Tests for L{pyidql.util.ioutil}.
"""
import io
import struct
import unittest

from pyidql import constants
from pyidql.util.ioutil import read_n_bytes, read_struct, pack_string, read_string

from ..base import TestBase


class ChunkedReader(object):
    """
    A file-like object returning at most one byte per read.
    """
    def __init__(self, data):
        self.f = io.BytesIO(data)

    def read(self, n):
        return self.f.read(min(n, 1))


class IoUtilTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.util.ioutil}.
    """
    def test_read_n_bytes(self):
        """
        Test L{pyidql.util.ioutil.read_n_bytes}.
        """
        data = b"test"
        f = io.BytesIO(data)
        read_a = read_n_bytes(f, 2)
        self.assertEqual(read_a, data[:2])
        read_b = read_n_bytes(f, 2)
        self.assertEqual(read_b, data[2:])
        f.seek(0)
        read_c = read_n_bytes(f, 1024)
        self.assertEqual(read_c, data)
        # check raise on incomplete behavior
        f.seek(0)
        with self.assertRaises(IOError):
            read_n_bytes(f, 1024, raise_on_incomplete=True)
        f.seek(0)
        self.assertEqual(read_n_bytes(f, 1024, raise_on_incomplete=False), b"test")
        # multiple reads
        self.assertEqual(read_n_bytes(ChunkedReader(b"abcdef"), 5), b"abcde")

    def test_read_struct(self):
        """
        Test L{pyidql.util.ioutil.read_struct}.
        """
        f = io.BytesIO(struct.pack(constants.ENDIAN + "IQ", 3, 2 ** 40))
        self.assertEqual(read_struct(f, "IQ"), (3, 2 ** 40))
        with self.assertRaises(IOError):
            read_struct(io.BytesIO(b"\x00\x01"), "I")

    def test_strings(self):
        """
        Test L{pyidql.util.ioutil.pack_string} and L{pyidql.util.ioutil.read_string}.
        """
        packed = pack_string("critic/q0/w") + pack_string("") + pack_string("äöü")
        f = io.BytesIO(packed)
        self.assertEqual(read_string(f), "critic/q0/w")
        self.assertEqual(read_string(f), "")
        self.assertEqual(read_string(f), "äöü")
        # length prefix counts bytes, not characters
        self.assertEqual(len(pack_string("äöü")), 4 + 6)
        with self.assertRaises(IOError):
            read_string(io.BytesIO(pack_string("truncated")[:-2]))
