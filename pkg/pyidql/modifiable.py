"""
Mix-in for modifiable objects.

Parameter sets and offline datasets track whether they changed since they
were last written and whether they may change at all.
"""
from .exceptions import NonMutable


class ModifiableMixIn(object):
    """
    A mix-in class for modifiable objects.

    A parameter set becomes dirty with each optimizer or EMA step and clean
    again once its checkpoint has been written.

    Freezing makes an object read-only. Every method changing the object
    must call L{ModifiableMixIn.ensure_mutable} first; frozen behavior
    models and offline datasets rely on this.

    @ivar mutable: if not nonzero, prevent modifications of this object.
    @type mutable: L{bool}

    @ivar _dirty: nonzero if the object changed since it was last written
    @type _dirty: L{bool}
    """
    def __init__(self):
        """
        The default constructor.

        Subclasses must call this constructor.
        """
        self._dirty = False
        self.mutable = True

    @property
    def dirty(self):
        """
        True if this object changed since it was last written.

        @rtype: L{bool}
        """
        return self._dirty

    @dirty.setter
    def dirty(self, value):
        self._dirty = value

    def mark_dirty(self):
        """
        Mark this object as changed.
        """
        self._dirty = True

    def after_flush(self):
        """
        Called once this object matches the state written to disk.
        """
        self._dirty = False

    def freeze(self):
        """
        Make this object read-only.
        """
        self.mutable = False

    def ensure_mutable(self):
        """
        Raise if this object is frozen.

        @raises pyidql.exceptions.NonMutable: if C{self.mutable = False}.
        """
        if not self.mutable:
            raise NonMutable("Object {} is not mutable!".format(repr(self)))
