"""
Seeded random streams.

All randomness in pyidql flows through explicit L{numpy.random.Generator}
objects. Named streams derived from one experiment seed are independent
of each other and of the order in which they are requested, so adding a
new consumer does not shift the numbers drawn by existing ones.
"""
import hashlib

import numpy as np


def _name_key(name):
    """
    Map a stream name to a stable 32 bit integer.

    @param name: name of the stream
    @type name: L{str}
    @return: the key
    @rtype: L{int}
    """
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def stream(seed, name):
    """
    Return the random stream with the given name for a seed.

    @param seed: experiment seed
    @type seed: L{int}
    @param name: name of the stream, e.g. C{"critic"} or C{"dataset"}
    @type name: L{str}
    @return: a new generator
    @rtype: L{numpy.random.Generator}
    """
    if not isinstance(seed, int) or seed < 0:
        raise ValueError("Seed must be a non-negative integer, got {!r}!".format(seed))
    if not isinstance(name, str):
        raise TypeError("Expected stream name to be a string, got {} instead!".format(type(name)))
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(_name_key(name), ))
    return np.random.default_rng(sequence)


def spawn(rng, n):
    """
    Derive n independent child streams from a generator.

    @param rng: parent generator
    @type rng: L{numpy.random.Generator}
    @param n: number of children
    @type n: L{int}
    @return: the child generators
    @rtype: L{list} of L{numpy.random.Generator}
    """
    seeds = rng.integers(0, 2 ** 63 - 1, size=n)
    return [np.random.default_rng(int(s)) for s in seeds]
