"""
This module contains the L{ParamSet} class and the binary checkpoint format.

A checkpoint consists of a fixed-size header followed by one record per
parameter, in sorted path order::

    header: magic (4s), version (H), parameter count (I), step count (Q)
    record: path length (I), path (utf-8), rank (I), dims (rank * Q),
            values (product(dims) * little-endian float64)

Writing and reading a checkpoint reproduces every value bit-exactly.
"""
import io
import struct
import threading

import numpy as np

from . import constants
from .modifiable import ModifiableMixIn
from .tensor import Tensor
from .exceptions import NotACheckpoint, IncompatibleFormat, ParamMismatch
from .util.ioutil import read_struct, read_string, read_n_bytes, pack_string


class CheckpointHeader(object):
    """
    The header of a checkpoint file.

    @cvar FORMAT: the format of a checkpoint header
    @type FORMAT: L{str}
    @cvar LENGTH: length of the checkpoint header
    @type LENGTH: L{int}

    @ivar magic: magic bytes of this checkpoint
    @type magic: L{bytes}
    @ivar version: format version
    @type version: L{int}
    @ivar count: number of parameters
    @type count: L{int}
    @ivar step_count: optimizer steps taken by the parameter set
    @type step_count: L{int}
    """
    FORMAT = constants.ENDIAN + "4sHIQ"
    LENGTH = struct.calcsize(FORMAT)

    def __init__(self, magic, version, count, step_count):
        """
        The default constructor.

        The arguments are arranged in the same order as they appear in the header.
        """
        assert isinstance(magic, bytes)
        assert isinstance(version, int) and version >= 0
        assert isinstance(count, int) and count >= 0
        assert isinstance(step_count, int) and step_count >= 0
        self.magic = magic
        self.version = version
        self.count = count
        self.step_count = step_count

    def check_compatible(self):
        """
        Check if this header is compatible, raising an exception if not.

        @raises pyidql.exceptions.NotACheckpoint: when the magic bytes are wrong
        @raises pyidql.exceptions.IncompatibleFormat: when the version is not supported
        """
        if self.magic != constants.CHECKPOINT_MAGIC:
            raise NotACheckpoint(
                "Checkpoints should start with {!r}, but found {!r}!".format(constants.CHECKPOINT_MAGIC, self.magic)
            )
        if self.version != constants.CHECKPOINT_VERSION:
            raise IncompatibleFormat("Checkpoint version {} not supported!".format(self.version))

    @classmethod
    def from_bytes(cls, s):
        """
        Construct a header from a bytestring.

        @param s: string to parse
        @type s: L{bytes}
        @return: the header parsed from the bytes
        @rtype: L{CheckpointHeader}
        @raises ValueError: if the bytestring has the wrong length
        """
        assert isinstance(s, bytes)
        if len(s) != cls.LENGTH:
            raise ValueError("Header length must be {}, got {}!".format(cls.LENGTH, len(s)))
        return cls(*struct.unpack(cls.FORMAT, s))

    def to_bytes(self):
        """
        Dump this header into a bytestring.

        @return: a bytestring representation of this header.
        @rtype: L{bytes}
        """
        return struct.pack(self.FORMAT, self.magic, self.version, self.count, self.step_count)


class ParamSet(ModifiableMixIn):
    """
    A named collection of parameter tensors.

    Paths are unique, iteration happens in sorted path order. All
    parameters are leaf tensors requiring a gradient. Optimizer and EMA
    steps mutate the values in place; this is prevented once the
    parameter set has been frozen.

    @ivar step_count: number of optimizer steps applied to this set
    @type step_count: L{int}

    @ivar _params: mapping of path -> tensor
    @type _params: L{dict} of L{str} -> L{pyidql.tensor.Tensor}
    @ivar _lock: lock held while mutating the values
    @type _lock: L{threading.Lock}
    """
    def __init__(self, step_count=0):
        """
        The default constructor.

        @param step_count: initial step count
        @type step_count: L{int}
        """
        ModifiableMixIn.__init__(self)
        assert isinstance(step_count, int) and step_count >= 0
        self.step_count = step_count
        self._params = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._params)

    def __contains__(self, path):
        return path in self._params

    def __iter__(self):
        return iter(self.paths())

    def __getitem__(self, path):
        """
        Return the tensor stored at a path.

        @param path: path of the parameter
        @type path: L{str}
        @return: the parameter tensor
        @rtype: L{pyidql.tensor.Tensor}
        @raises KeyError: if no parameter exists at this path
        """
        try:
            return self._params[path]
        except KeyError:
            raise KeyError("No parameter at path '{}'!".format(path))

    @property
    def lock(self):
        """
        The lock guarding mutations of this parameter set.

        @return: the lock
        @rtype: L{threading.Lock}
        """
        return self._lock

    def add(self, path, values):
        """
        Register a new parameter.

        @param path: unique path of the parameter
        @type path: L{str}
        @param values: initial values
        @type values: array-like
        @return: the new parameter tensor
        @rtype: L{pyidql.tensor.Tensor}
        @raises TypeError: if path is not a string
        @raises ValueError: if the path is already taken
        """
        if not isinstance(path, str):
            raise TypeError("Expected path to be a string, got {} instead!".format(type(path)))
        if path in self._params:
            raise ValueError("Parameter path '{}' already registered!".format(path))
        self.ensure_mutable()
        tensor = Tensor(np.array(values, dtype=constants.DTYPE, copy=True), requires_grad=True)
        self._params[path] = tensor
        self.mark_dirty()
        return tensor

    def paths(self):
        """
        Return all parameter paths in sorted order.

        @return: the sorted paths
        @rtype: L{list} of L{str}
        """
        return sorted(self._params.keys())

    def items(self):
        """
        Return (path, tensor) pairs in sorted path order.

        @return: the pairs
        @rtype: L{list} of L{tuple}
        """
        return [(path, self._params[path]) for path in self.paths()]

    def shapes(self):
        """
        Return a mapping of path -> shape.

        @return: the shapes
        @rtype: L{dict}
        """
        return {path: t.shape for path, t in self._params.items()}

    def num_parameters(self):
        """
        Return the total number of scalar parameters.

        @return: the number of parameters
        @rtype: L{int}
        """
        return int(np.sum([t.size for t in self._params.values()], dtype=np.int64))

    def zero_grad(self):
        """
        Reset all gradient accumulators.
        """
        for t in self._params.values():
            t.grad = None

    def norms(self):
        """
        Return the L2 norm of each parameter, for diagnostics.

        @return: mapping of path -> norm
        @rtype: L{dict} of L{str} -> L{float}
        """
        return {path: float(np.linalg.norm(t.data)) for path, t in self.items()}

    def distance(self, other):
        """
        Return the L2 distance between the values of two compatible sets.

        @param other: parameter set to compare to
        @type other: L{ParamSet}
        @return: the euclidean distance over all parameters
        @rtype: L{float}
        """
        self.assert_compatible(other)
        total = 0.0
        for path, t in self.items():
            diff = t.data - other[path].data
            total += float(np.sum(diff * diff))
        return float(np.sqrt(total))

    def assert_compatible(self, other):
        """
        Ensure another parameter set has identical paths and shapes.

        @param other: parameter set to compare to
        @type other: L{ParamSet}
        @raises pyidql.exceptions.ParamMismatch: on any difference
        """
        if not isinstance(other, ParamSet):
            raise TypeError("Expected a ParamSet, got {} instead!".format(type(other)))
        if self.paths() != other.paths():
            missing = set(self.paths()).symmetric_difference(other.paths())
            raise ParamMismatch("Parameter paths differ: {}".format(sorted(missing)))
        for path, t in self.items():
            if t.shape != other[path].shape:
                raise ParamMismatch(
                    "Parameter '{}' has shape {} vs {}".format(path, t.shape, other[path].shape)
                )

    def copy(self):
        """
        Return an independent, mutable deep copy of this parameter set.

        @return: the copy
        @rtype: L{ParamSet}
        """
        new = ParamSet(step_count=self.step_count)
        for path, t in self.items():
            new.add(path, t.data)
        return new

    def load_values(self, other):
        """
        Overwrite the values of this set with those of a compatible set.

        @param other: source parameter set
        @type other: L{ParamSet}
        @raises pyidql.exceptions.ParamMismatch: if the sets are not compatible
        @raises pyidql.exceptions.NonMutable: if this set is frozen
        """
        self.assert_compatible(other)
        with self._lock:
            self.ensure_mutable()
            for path, t in self.items():
                t.data[...] = other[path].data
            self.step_count = other.step_count
            self.mark_dirty()

    def fingerprint(self):
        """
        Return the checkpoint bytes of this set, for bit-exact comparisons.

        @return: the serialized parameters
        @rtype: L{bytes}
        """
        return self.to_bytes()

    def values_fingerprint(self):
        """
        Return the serialized paths and values of this set, ignoring the step count.

        @return: the serialized values
        @rtype: L{bytes}
        """
        return self._values_to_bytes()

    # ================ converters =====================

    def to_bytes(self):
        """
        Dump this parameter set into a checkpoint bytestring.

        @return: the checkpoint
        @rtype: L{bytes}
        """
        header = CheckpointHeader(
            magic=constants.CHECKPOINT_MAGIC,
            version=constants.CHECKPOINT_VERSION,
            count=len(self._params),
            step_count=self.step_count,
        )
        return header.to_bytes() + self._values_to_bytes()

    def _values_to_bytes(self):
        parts = []
        for path, t in self.items():
            parts.append(pack_string(path))
            parts.append(struct.pack(constants.ENDIAN + "I", t.data.ndim))
            parts.append(struct.pack(constants.ENDIAN + "{}Q".format(t.data.ndim), *t.shape))
            parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_file(cls, f):
        """
        Read a parameter set from a checkpoint file object.

        @param f: file-like object to read from
        @type f: file-like
        @return: the parameter set
        @rtype: L{ParamSet}
        @raises pyidql.exceptions.NotACheckpoint: on wrong magic bytes
        @raises pyidql.exceptions.IncompatibleFormat: on an unsupported version
        @raises IOError: on a truncated file
        """
        data = read_n_bytes(f, CheckpointHeader.LENGTH)
        if len(data) != CheckpointHeader.LENGTH:
            raise NotACheckpoint("File too short to contain a checkpoint header!")
        header = CheckpointHeader.from_bytes(data)
        header.check_compatible()
        params = cls(step_count=header.step_count)
        for _ in range(header.count):
            path = read_string(f)
            (rank, ) = read_struct(f, "I")
            dims = read_struct(f, "{}Q".format(rank)) if rank > 0 else ()
            n = int(np.prod(dims, dtype=np.int64)) if rank > 0 else 1
            raw = read_n_bytes(f, 8 * n, raise_on_incomplete=True)
            values = np.frombuffer(raw, dtype="<f8").astype(constants.DTYPE).reshape(dims)
            params.add(path, values)
        params.after_flush()
        return params

    @classmethod
    def from_bytes(cls, s):
        """
        Read a parameter set from checkpoint bytes.

        @param s: checkpoint data
        @type s: L{bytes}
        @return: the parameter set
        @rtype: L{ParamSet}
        """
        assert isinstance(s, bytes)
        return cls.from_file(io.BytesIO(s))

    def save(self, path):
        """
        Write this parameter set to a checkpoint file.

        @param path: path of the file to write
        @type path: L{str}
        """
        with open(path, "wb") as fout:
            fout.write(self.to_bytes())
        self.after_flush()

    @classmethod
    def load(cls, path):
        """
        Load a parameter set from a checkpoint file.

        @param path: path of the checkpoint
        @type path: L{str}
        @return: the parameter set
        @rtype: L{ParamSet}
        """
        with open(path, "rb") as fin:
            return cls.from_file(fin)
