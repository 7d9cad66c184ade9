"""
Various I/O related utility functions for the binary file formats.
"""
import struct

from .. import constants


def read_n_bytes(f, n, raise_on_incomplete=False):
    """
    Read n bytes in total from f.

    If raise_on_incomplete is zero, this may return less bytes on EOF.
    Otherwise, an exception is raised.

    @param f: file-like object to read from
    @type f: file-like
    @param n: number of bytes to read
    @type n: L{int}
    @param raise_on_incomplete: if nonzero, raise an Exception if unable to read full n bytes
    @type raise_on_incomplete: L{bool}
    @return: the content read
    @rtype: L{bytes}
    @raises IOError: when raise_in_incomplete is nonzero and unable to read full n bytes.
    """
    rbuff = b""
    remaining_read = n
    while remaining_read > 0:
        data = f.read(remaining_read)
        if not data:
            if remaining_read and raise_on_incomplete:
                raise IOError("Encountered EOF before reading full {} bytes ({} read)!".format(n, len(rbuff)))
            break
        rbuff += data
        remaining_read -= len(data)
    return rbuff


def read_struct(f, fmt):
    """
    Read and unpack a struct from a file.

    @param f: file-like object to read from
    @type f: file-like
    @param fmt: struct format, without the endian prefix
    @type fmt: L{str}
    @return: the unpacked values
    @rtype: L{tuple}
    @raises IOError: on a truncated file
    """
    fmt = constants.ENDIAN + fmt
    data = read_n_bytes(f, struct.calcsize(fmt), raise_on_incomplete=True)
    return struct.unpack(fmt, data)


def pack_string(s):
    """
    Encode a string prefixed by its byte length (32 bit).

    @param s: string to encode
    @type s: L{str}
    @return: the length-prefixed bytes
    @rtype: L{bytes}
    """
    encoded = s.encode(constants.ENCODING)
    return struct.pack(constants.ENDIAN + "I", len(encoded)) + encoded


def read_string(f):
    """
    Read a string written by L{pack_string}.

    @param f: file-like object to read from
    @type f: file-like
    @return: the decoded string
    @rtype: L{str}
    @raises IOError: on a truncated file
    """
    (length, ) = read_struct(f, "I")
    return read_n_bytes(f, length, raise_on_incomplete=True).decode(constants.ENCODING)
