"""
A minimal deterministic reverse-mode automatic differentiation engine.

Every operation in this module takes L{Tensor} objects and returns a
new L{Tensor}. If any input requires a gradient, the output remembers
its parents and a closure computing the vector-jacobian product. The
graph is rebuilt for every forward pass (define-by-run) and released
by L{backward}, after which it can not be used again.

Supported operations: matmul, add, sub, elementwise multiply, ReLU,
Mish, GELU, layer normalization, dropout, concatenation, mean, sum,
squared error, plus the small helpers (scale, apply, reshape, detach)
the networks and losses in this package need. Broadcasting follows
numpy rules, gradients are summed back to the input shape.

@var logger: logger used by the autodiff engine
@type logger: L{logging.Logger}
"""
import itertools
import logging

import numpy as np

from . import constants
from .exceptions import ShapeMismatch, TapeConsumed


logger = logging.getLogger(__name__)

# monotonic source of tape node handles
_node_counter = itertools.count()


class Tensor(object):
    """
    A dense n-dimensional array of 64 bit floats with an optional gradient.

    Leaf tensors which require a gradient (parameters) accumulate their
    gradient in L{Tensor.grad} during L{backward}. Intermediate tensors
    created by operations hold a reference to their parents until the
    graph has been consumed.

    @ivar data: the values of this tensor
    @type data: L{numpy.ndarray}
    @ivar grad: gradient accumulator of the same shape, or L{None}
    @type grad: L{numpy.ndarray} or L{None}
    @ivar requires_grad: whether gradients should flow into this tensor
    @type requires_grad: L{bool}
    @ivar tape_id: handle of the tape node that created this tensor, L{None} for leaves
    @type tape_id: L{int} or L{None}
    """
    def __init__(self, data, requires_grad=False):
        """
        The default constructor.

        @param data: values of the tensor, converted to 64 bit floats
        @type data: array-like
        @param requires_grad: whether gradients should be accumulated for this tensor
        @type requires_grad: L{bool}
        """
        self.data = np.asarray(data, dtype=constants.DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.tape_id = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    def __repr__(self):
        return "Tensor(shape={}, requires_grad={})".format(self.shape, self.requires_grad)

    @property
    def shape(self):
        """
        The shape of this tensor.

        @return: the shape
        @rtype: L{tuple} of L{int}
        """
        return self.data.shape

    @property
    def size(self):
        """
        The number of values in this tensor.

        @return: product of the shape
        @rtype: L{int}
        """
        return int(self.data.size)

    @property
    def is_leaf(self):
        """
        True if this tensor was not produced by a recorded operation.

        @return: whether this tensor is a leaf of the graph
        @rtype: L{bool}
        """
        return self.tape_id is None

    def numpy(self):
        """
        Return a copy of the values of this tensor.

        @return: the values as a numpy array
        @rtype: L{numpy.ndarray}
        """
        return self.data.copy()

    def item(self):
        """
        Return the value of a single-element tensor as a python float.

        @return: the value
        @rtype: L{float}
        @raises pyidql.exceptions.ShapeMismatch: if the tensor has more than one element
        """
        if self.size != 1:
            raise ShapeMismatch("item() requires a single element tensor, got shape {}".format(self.shape))
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        """
        Reset the gradient accumulator.
        """
        self.grad = None

    def backward(self):
        """
        Shortcut for L{backward}C{(self)}.
        """
        backward(self)

    # ============= operator overloads ==============

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value):
    """
    Wrap a value in a constant L{Tensor} unless it already is one.

    @param value: value to wrap
    @type value: L{Tensor} or array-like or number
    @return: the tensor
    @rtype: L{Tensor}
    """
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def _record(data, parents, backward_fn):
    """
    Create the output tensor of an operation and attach it to the tape.

    @param data: output values
    @type data: L{numpy.ndarray}
    @param parents: input tensors of the operation
    @type parents: L{tuple} of L{Tensor}
    @param backward_fn: callable receiving the output gradient
    @type backward_fn: callable
    @return: the output tensor
    @rtype: L{Tensor}
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.tape_id = next(_node_counter)
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(tensor, grad):
    """
    Add a gradient contribution to a tensor, if it requires one.
    """
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=constants.DTYPE, copy=True).reshape(tensor.shape)
    else:
        tensor.grad = tensor.grad + grad


def _unbroadcast(grad, shape):
    """
    Sum a gradient over the axes that were broadcast to reach its shape.

    @param grad: gradient with the broadcast shape
    @type grad: L{numpy.ndarray}
    @param shape: shape of the original operand
    @type shape: L{tuple}
    @return: the reduced gradient
    @rtype: L{numpy.ndarray}
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, opname):
    """
    Return the broadcast shape of two tensors or raise a structured error.
    """
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(
            "{}: shapes {} and {} do not conform".format(opname, a.shape, b.shape)
        )


# ================ elementary operations ==================

def add(a, b):
    """
    Elementwise addition with broadcasting.

    @param a: first operand
    @type a: L{Tensor} or array-like
    @param b: second operand
    @type b: L{Tensor} or array-like
    @return: a + b
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the shapes do not broadcast
    """
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def _backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _record(a.data + b.data, (a, b), _backward)


def sub(a, b):
    """
    Elementwise subtraction with broadcasting.

    @return: a - b
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the shapes do not broadcast
    """
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def _backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _record(a.data - b.data, (a, b), _backward)


def mul(a, b):
    """
    Elementwise multiplication with broadcasting.

    @return: a * b
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the shapes do not broadcast
    """
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def _backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _record(a.data * b.data, (a, b), _backward)


def neg(a):
    """
    Elementwise negation.
    """
    a = as_tensor(a)
    return _record(-a.data, (a, ), lambda g: _accumulate(a, -g))


def scale(a, factor):
    """
    Multiply a tensor by a python scalar.

    @param a: tensor to scale
    @type a: L{Tensor}
    @param factor: constant factor
    @type factor: L{float}
    @return: factor * a
    @rtype: L{Tensor}
    """
    a = as_tensor(a)
    factor = float(factor)
    return _record(a.data * factor, (a, ), lambda g: _accumulate(a, g * factor))


def matmul(a, b):
    """
    Matrix product of two 2-dimensional tensors.

    @param a: left operand of shape (n, k)
    @type a: L{Tensor}
    @param b: right operand of shape (k, m)
    @type b: L{Tensor}
    @return: the (n, m) product
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the inner dimensions differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul: shapes {} and {} do not conform".format(a.shape, b.shape))

    def _backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _record(a.data @ b.data, (a, b), _backward)


def reshape(a, shape):
    """
    Return a tensor with the same values and a new shape.

    @raises pyidql.exceptions.ShapeMismatch: if the number of values differs
    """
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape: can not reshape {} into {}".format(a.shape, shape))
    return _record(data, (a, ), lambda g: _accumulate(a, g.reshape(a.shape)))


def detach(a):
    """
    Return a constant leaf tensor sharing the values of a.

    No gradient flows through the result.
    """
    return Tensor(as_tensor(a).data, requires_grad=False)


def apply(a, fn, dfn):
    """
    Apply a scalar function elementwise, given its derivative.

    Both callables receive and return numpy arrays. This is used for the
    convex loss families, whose derivatives are known in closed form.

    @param a: input tensor
    @type a: L{Tensor}
    @param fn: function applied to the values
    @type fn: callable
    @param dfn: derivative of fn
    @type dfn: callable
    @return: fn(a)
    @rtype: L{Tensor}
    """
    a = as_tensor(a)
    x = a.data
    return _record(np.asarray(fn(x), dtype=constants.DTYPE), (a, ), lambda g: _accumulate(a, g * dfn(x)))


# ================== activations =====================

def relu(a):
    """
    Rectified linear unit.
    """
    a = as_tensor(a)
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a, ), lambda g: _accumulate(a, g * mask))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mish(a):
    """
    Mish activation, x * tanh(softplus(x)).
    """
    a = as_tensor(a)
    x = a.data
    tsp = np.tanh(_softplus(x))

    def _backward(g):
        _accumulate(a, g * (tsp + x * (1.0 - tsp * tsp) * _sigmoid(x)))

    return _record(x * tsp, (a, ), _backward)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """
    GELU activation (tanh approximation).
    """
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)

    def _backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _accumulate(a, g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner))

    return _record(0.5 * x * (1.0 + th), (a, ), _backward)


# ================= normalization ====================

def layer_norm(a, gamma=None, beta=None, eps=constants.LAYER_NORM_EPS):
    """
    Normalize the last axis to zero mean and unit variance, then apply an affine map.

    @param a: input tensor
    @type a: L{Tensor}
    @param gamma: scale over the last axis, or L{None} for no scaling
    @type gamma: L{Tensor} or L{None}
    @param beta: shift over the last axis, or L{None} for no shift
    @type beta: L{Tensor} or L{None}
    @param eps: variance epsilon
    @type eps: L{float}
    @return: the normalized tensor
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if gamma/beta do not match the last axis
    """
    a = as_tensor(a)
    n = a.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (n, ):
            raise ShapeMismatch("layer_norm: affine shape {} does not match input {}".format(p.shape, a.shape))
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = tuple(p for p in (a, gamma, beta) if p is not None)

    def _backward(g):
        lead = tuple(range(g.ndim - 1))
        if gamma is not None:
            _accumulate(gamma, (g * xhat).sum(axis=lead))
            dxhat = g * gamma.data
        else:
            dxhat = g
        if beta is not None:
            _accumulate(beta, g.sum(axis=lead))
        if a.requires_grad:
            dx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            _accumulate(a, dx)

    return _record(out, parents, _backward)


def dropout(a, rate, rng, train):
    """
    Inverted dropout.

    At train time each value is zeroed with probability C{rate} and the
    survivors are scaled by 1/(1-rate), so evaluation needs no rescaling.

    @param a: input tensor
    @type a: L{Tensor}
    @param rate: drop probability in [0, 1)
    @type rate: L{float}
    @param rng: random stream used for the mask
    @type rng: L{numpy.random.Generator} or L{None} if not training
    @param train: whether we are training
    @type train: L{bool}
    @return: the tensor with dropout applied (a itself in eval mode or for rate 0)
    @rtype: L{Tensor}
    @raises ValueError: if rate is outside of [0, 1)
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError("Dropout rate must be in [0, 1), got {}!".format(rate))
    a = as_tensor(a)
    if (not train) or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout() needs an explicit random stream when training!")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _record(a.data * mask, (a, ), lambda g: _accumulate(a, g * mask))


# ================= structural operations ==================

def concat(tensors, axis=-1):
    """
    Concatenate tensors along an axis.

    @param tensors: tensors to concatenate
    @type tensors: L{list} of L{Tensor}
    @param axis: axis to concatenate along
    @type axis: L{int}
    @return: the concatenated tensor
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the other axes differ
    """
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat: shapes {} do not conform".format([t.shape for t in tensors]))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, part)

    return _record(data, tensors, _backward)


def sum(a, axis=None):
    """
    Sum of all values, or along an axis.
    """
    a = as_tensor(a)

    def _backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _record(a.data.sum(axis=axis), (a, ), _backward)


def mean(a, axis=None):
    """
    Mean of all values, or along an axis.
    """
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]

    def _backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g / count, a.shape))

    return _record(a.data.mean(axis=axis), (a, ), _backward)


def squared_error(pred, target):
    """
    Elementwise squared error (pred - target)^2.

    @param pred: predictions
    @type pred: L{Tensor}
    @param target: targets, usually constant
    @type target: L{Tensor} or array-like
    @return: the elementwise squared error
    @rtype: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the shapes differ
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch("squared_error: shapes {} and {} differ".format(pred.shape, target.shape))
    diff = pred.data - target.data

    def _backward(g):
        _accumulate(pred, 2.0 * diff * g)
        _accumulate(target, -2.0 * diff * g)

    return _record(diff * diff, (pred, target), _backward)


# ================== backward pass ====================

def _topological_order(root):
    """
    Return all recorded nodes reachable from root, parents before children.
    """
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """
    Backpropagate from a scalar loss, accumulating gradients in all leaves.

    The graph is released afterwards: intermediate gradients and closures
    are dropped and calling this function again on the same loss fails.

    @param loss: scalar loss tensor
    @type loss: L{Tensor}
    @raises pyidql.exceptions.ShapeMismatch: if the loss is not a scalar
    @raises pyidql.exceptions.TapeConsumed: if the graph has already been consumed
    """
    if loss.size != 1:
        raise ShapeMismatch("backward() requires a scalar loss, got shape {}".format(loss.shape))
    if loss._consumed:
        raise TapeConsumed("backward() was already called on this graph!")
    if not loss.requires_grad:
        # nothing on the tape, e.g. a loss computed from frozen tensors only
        loss._consumed = True
        return
    order = _topological_order(loss)
    logger.log(constants.LOG_LEVEL_STEP, "Backward pass over {} nodes".format(len(order)))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if not node.is_leaf:
            node._backward = None
            node._parents = ()
            node.grad = None
            node._consumed = True
