"""
Content hashes for run manifests.
"""
import hashlib


def sha256_bytes(data):
    """
    Return the hex sha256 digest of a bytestring.

    @param data: data to hash
    @type data: L{bytes}
    @return: the hex digest
    @rtype: L{str}
    """
    return hashlib.sha256(data).hexdigest()


def sha256_file(path, blocksize=1 << 16):
    """
    Return the hex sha256 digest of a file's content.

    @param path: path of the file to hash
    @type path: L{str}
    @param blocksize: number of bytes to read at once
    @type blocksize: L{int}
    @return: the hex digest
    @rtype: L{str}
    """
    h = hashlib.sha256()
    with open(path, "rb") as fin:
        while True:
            block = fin.read(blocksize)
            if not block:
                break
            h.update(block)
    return h.hexdigest()
