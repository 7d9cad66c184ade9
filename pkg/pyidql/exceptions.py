"""
Exception definitions.
"""


class BaseIdqlException(Exception):
    """
    Base class for all pyidql-related exceptions.

    This allows the user to simply catch all such exceptions at once.
    """
    pass


class ShapeMismatch(BaseIdqlException, ValueError):
    """
    Exception raised when the shapes of tensors do not conform for an operation.
    """
    pass


class TapeConsumed(BaseIdqlException):
    """
    Exception raised when backward() is called on an already consumed graph.
    """
    pass


class NonMutable(BaseIdqlException):
    """
    Exception raised when a frozen/immutable object is modified.
    """
    pass


class ParamMismatch(BaseIdqlException, ValueError):
    """
    Exception raised when two parameter sets do not share the same paths and shapes.
    """
    pass


class FormatError(BaseIdqlException):
    """
    Baseclass for exceptions raised while reading binary files.
    """
    pass


class NotACheckpoint(FormatError):
    """
    Exception raised when a file does not appear to be a parameter checkpoint.
    """
    pass


class NotADataset(FormatError):
    """
    Exception raised when a file does not appear to be an offline dataset.
    """
    pass


class IncompatibleFormat(FormatError):
    """
    Exception raised when a file uses an unsupported format version.
    """
    pass


class LossOverflow(BaseIdqlException, OverflowError):
    """
    Exception raised when the exponential loss would overflow.
    """
    pass


class InvalidDistribution(BaseIdqlException, ValueError):
    """
    Exception raised when a discrete action distribution is invalid.
    """
    pass


class DegenerateWeights(BaseIdqlException):
    """
    Exception raised when all implicit weights of a distribution are zero.
    """
    pass


class EmptyDataset(BaseIdqlException, ValueError):
    """
    Exception raised when an operation requires a non-empty dataset or batch.
    """
    pass


class DivergenceError(BaseIdqlException):
    """
    Exception raised when training produced a non-finite loss.

    @ivar snapshot: diagnostic information collected at the time of divergence
    @type snapshot: L{dict}
    """
    def __init__(self, message, snapshot=None):
        """
        The default constructor.

        @param message: message describing the divergence
        @type message: L{str}
        @param snapshot: diagnostic information (step, last reports, parameter norms)
        @type snapshot: L{dict} or L{None}
        """
        BaseIdqlException.__init__(self, message)
        self.snapshot = snapshot if snapshot is not None else {}


class ConfigError(BaseIdqlException, ValueError):
    """
    Exception raised when a configuration field is invalid.
    """
    pass


class UnknownGenerator(BaseIdqlException, ValueError):
    """
    Exception raised when an unknown dataset generator is requested.
    """
    pass
