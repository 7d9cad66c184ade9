"""
Network building blocks on top of L{pyidql.tensor}.

Networks in this module only describe a structure. Their parameters
live in a L{pyidql.paramset.ParamSet} under the network's path prefix,
so the same structure evaluates an online parameter set and its EMA
target alike::

    net = MLP("v", in_dim=4, out_dim=1, hidden_dim=256, n_hidden=2)
    params = ParamSet()
    net.init(params, rng)
    out = net.forward(params, states)

Dense weights use a fan-in scaled uniform initialization,
U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases start at zero.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import enum
import logging
import math

import numpy as np

from . import constants
from . import tensor as tg
from .tensor import Tensor


logger = logging.getLogger(__name__)


class Activation(enum.IntEnum):
    """
    An enum of the supported activation functions.
    """
    RELU = 0
    MISH = 1
    GELU = 2

    @classmethod
    def parse(cls, name):
        """
        Parse an activation from its (case insensitive) name.

        @param name: name of the activation, e.g. C{"mish"}
        @type name: L{str} or L{Activation}
        @return: the activation
        @rtype: L{Activation}
        @raises ValueError: on an unknown name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError("Unknown activation: '{}'".format(name))

    def apply(self, x):
        """
        Apply this activation to a tensor.

        @param x: input tensor
        @type x: L{pyidql.tensor.Tensor}
        @return: the activated tensor
        @rtype: L{pyidql.tensor.Tensor}
        """
        if self == Activation.RELU:
            return tg.relu(x)
        elif self == Activation.MISH:
            return tg.mish(x)
        else:
            return tg.gelu(x)


def init_dense(params, path, n_in, n_out, rng, zero=False):
    """
    Register the weight and bias of a dense layer.

    @param params: parameter set to register the layer in
    @type params: L{pyidql.paramset.ParamSet}
    @param path: path prefix of the layer
    @type path: L{str}
    @param n_in: number of inputs
    @type n_in: L{int}
    @param n_out: number of outputs
    @type n_out: L{int}
    @param rng: random stream for the weights
    @type rng: L{numpy.random.Generator}
    @param zero: if nonzero, initialize the weights with zeros
    @type zero: L{bool}
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("Dense layer dimensions must be positive, got {}x{}!".format(n_in, n_out))
    if zero:
        w = np.zeros((n_in, n_out), dtype=constants.DTYPE)
    else:
        bound = 1.0 / math.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out))
    params.add(path + "/w", w)
    params.add(path + "/b", np.zeros(n_out, dtype=constants.DTYPE))


def dense(params, path, x):
    """
    Evaluate a dense layer registered by L{init_dense}.

    @param params: parameter set holding the layer
    @type params: L{pyidql.paramset.ParamSet}
    @param path: path prefix of the layer
    @type path: L{str}
    @param x: input of shape (batch, n_in)
    @type x: L{pyidql.tensor.Tensor}
    @return: the output of shape (batch, n_out)
    @rtype: L{pyidql.tensor.Tensor}
    """
    return tg.add(tg.matmul(x, params[path + "/w"]), params[path + "/b"])


def dense_parameter_count(n_in, n_out):
    """
    Return the number of parameters of a dense layer.

    @rtype: L{int}
    """
    return n_in * n_out + n_out


def time_embedding(t, dim):
    """
    Sinusoidal embedding of integer diffusion steps.

    The first half of the features are sines, the second half cosines,
    with geometrically spaced frequencies from 1 to 1/10000.

    @param t: diffusion steps, shape (batch, )
    @type t: array-like of L{int}
    @param dim: embedding dimension, must be even
    @type dim: L{int}
    @return: the embedding, shape (batch, dim)
    @rtype: L{numpy.ndarray}
    @raises ValueError: if dim is not a positive even number
    """
    if dim < 2 or dim % 2:
        raise ValueError("Time embedding dimension must be a positive even number, got {}!".format(dim))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=constants.DTYPE) / half)
    args = np.asarray(t, dtype=constants.DTYPE).reshape(-1, 1) * freqs.reshape(1, -1)
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


class MLP(object):
    """
    A plain multi layer perceptron.

    Used for the critic networks and as the simple score network baseline.

    @ivar name: path prefix of the parameters of this network
    @type name: L{str}
    @ivar in_dim: input dimension
    @type in_dim: L{int}
    @ivar out_dim: output dimension
    @type out_dim: L{int}
    @ivar hidden_dim: width of the hidden layers
    @type hidden_dim: L{int}
    @ivar n_hidden: number of hidden layers
    @type n_hidden: L{int}
    @ivar activation: activation after each hidden layer
    @type activation: L{Activation}
    @ivar zero_head: if nonzero, the output layer starts with zero weights
    @type zero_head: L{bool}
    """
    def __init__(self, name, in_dim, out_dim, hidden_dim, n_hidden=2, activation=Activation.RELU, zero_head=False):
        """
        The default constructor.

        @raises ValueError: on non-positive dimensions
        """
        if min(in_dim, out_dim, hidden_dim) < 1 or n_hidden < 0:
            raise ValueError(
                "Invalid MLP dimensions: in={}, out={}, hidden={}, layers={}".format(in_dim, out_dim, hidden_dim, n_hidden)
            )
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.activation = Activation.parse(activation)
        self.zero_head = zero_head

    def _dims(self):
        return [self.in_dim] + [self.hidden_dim] * self.n_hidden + [self.out_dim]

    def init(self, params, rng):
        """
        Register the parameters of this network.

        @param params: parameter set to register the parameters in
        @type params: L{pyidql.paramset.ParamSet}
        @param rng: random stream for the initialization
        @type rng: L{numpy.random.Generator}
        """
        dims = self._dims()
        for i in range(len(dims) - 1):
            is_head = (i == len(dims) - 2)
            init_dense(
                params,
                "{}/dense{}".format(self.name, i),
                dims[i],
                dims[i + 1],
                rng,
                zero=(is_head and self.zero_head),
            )

    def parameter_count(self):
        """
        Return the number of parameters of this network.

        @rtype: L{int}
        """
        dims = self._dims()
        return sum(dense_parameter_count(dims[i], dims[i + 1]) for i in range(len(dims) - 1))

    def forward(self, params, x, rng=None, train=False):
        """
        Evaluate this network.

        @param params: parameter set holding the parameters
        @type params: L{pyidql.paramset.ParamSet}
        @param x: input of shape (batch, in_dim)
        @type x: L{pyidql.tensor.Tensor} or array-like
        @param rng: unused, for interface compatibility with L{LNResNet}
        @param train: unused, for interface compatibility with L{LNResNet}
        @return: output of shape (batch, out_dim)
        @rtype: L{pyidql.tensor.Tensor}
        """
        h = tg.as_tensor(x)
        n_layers = self.n_hidden + 1
        for i in range(n_layers):
            h = dense(params, "{}/dense{}".format(self.name, i), h)
            if i < n_layers - 1:
                h = self.activation.apply(h)
        return h


class LNResNet(object):
    """
    A residual network of layer normalized MLP blocks.

    Topology::

        input -> Dense(hidden) -> n_blocks * block -> Activation -> Dense(out)
        block(x) = x + Dense(hidden)(Activation(Dense(4 * hidden)(LayerNorm(Dropout(x)))))

    The last dense layer of every block and the output layer start with
    zero weights, so at initialization every block is the identity and the
    network outputs zero.

    @ivar name: path prefix of the parameters of this network
    @type name: L{str}
    @ivar in_dim: input dimension
    @type in_dim: L{int}
    @ivar out_dim: output dimension
    @type out_dim: L{int}
    @ivar hidden_dim: width of the residual stream
    @type hidden_dim: L{int}
    @ivar n_blocks: number of residual blocks
    @type n_blocks: L{int}
    @ivar activation: activation function
    @type activation: L{Activation}
    @ivar dropout: dropout rate at the start of every block
    @type dropout: L{float}
    @ivar use_layer_norm: if zero, the blocks skip the layer normalization
    @type use_layer_norm: L{bool}
    """
    def __init__(
        self,
        name,
        in_dim,
        out_dim,
        hidden_dim=constants.DEFAULT_HIDDEN_DIM,
        n_blocks=constants.DEFAULT_N_BLOCKS,
        activation=Activation.MISH,
        dropout=constants.DEFAULT_DROPOUT,
        use_layer_norm=True,
    ):
        """
        The default constructor.

        @raises ValueError: on non-positive dimensions or an invalid dropout rate
        """
        if min(in_dim, out_dim, hidden_dim) < 1 or n_blocks < 0:
            raise ValueError(
                "Invalid LNResNet dimensions: in={}, out={}, hidden={}, blocks={}".format(
                    in_dim, out_dim, hidden_dim, n_blocks,
                )
            )
        if not (0.0 <= dropout < 1.0):
            raise ValueError("Dropout rate must be in [0, 1), got {}!".format(dropout))
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden_dim = hidden_dim
        self.n_blocks = n_blocks
        self.activation = Activation.parse(activation)
        self.dropout = dropout
        self.use_layer_norm = use_layer_norm

    def init(self, params, rng):
        """
        Register the parameters of this network.

        @param params: parameter set to register the parameters in
        @type params: L{pyidql.paramset.ParamSet}
        @param rng: random stream for the initialization
        @type rng: L{numpy.random.Generator}
        """
        h = self.hidden_dim
        init_dense(params, self.name + "/input", self.in_dim, h, rng)
        for i in range(self.n_blocks):
            prefix = "{}/block{}".format(self.name, i)
            if self.use_layer_norm:
                params.add(prefix + "/ln/gamma", np.ones(h, dtype=constants.DTYPE))
                params.add(prefix + "/ln/beta", np.zeros(h, dtype=constants.DTYPE))
            init_dense(params, prefix + "/expand", h, 4 * h, rng)
            init_dense(params, prefix + "/contract", 4 * h, h, rng, zero=True)
        init_dense(params, self.name + "/output", h, self.out_dim, rng, zero=True)

    def parameter_count(self):
        """
        Return the number of parameters of this network.

        @rtype: L{int}
        """
        h = self.hidden_dim
        block = dense_parameter_count(h, 4 * h) + dense_parameter_count(4 * h, h)
        if self.use_layer_norm:
            block += 2 * h
        return (
            dense_parameter_count(self.in_dim, h)
            + self.n_blocks * block
            + dense_parameter_count(h, self.out_dim)
        )

    def block(self, params, i, x, rng=None, train=False):
        """
        Evaluate a single residual block.

        @param params: parameter set holding the parameters
        @type params: L{pyidql.paramset.ParamSet}
        @param i: index of the block
        @type i: L{int}
        @param x: input of shape (batch, hidden_dim)
        @type x: L{pyidql.tensor.Tensor}
        @param rng: random stream for dropout, required when training
        @type rng: L{numpy.random.Generator} or L{None}
        @param train: whether dropout is active
        @type train: L{bool}
        @return: output of shape (batch, hidden_dim)
        @rtype: L{pyidql.tensor.Tensor}
        """
        prefix = "{}/block{}".format(self.name, i)
        h = tg.dropout(x, self.dropout, rng, train)
        if self.use_layer_norm:
            h = tg.layer_norm(h, params[prefix + "/ln/gamma"], params[prefix + "/ln/beta"])
        h = dense(params, prefix + "/expand", h)
        h = self.activation.apply(h)
        h = dense(params, prefix + "/contract", h)
        return tg.add(x, h)

    def forward(self, params, x, rng=None, train=False):
        """
        Evaluate this network.

        @param params: parameter set holding the parameters
        @type params: L{pyidql.paramset.ParamSet}
        @param x: input of shape (batch, in_dim)
        @type x: L{pyidql.tensor.Tensor} or array-like
        @param rng: random stream for dropout, required when training
        @type rng: L{numpy.random.Generator} or L{None}
        @param train: whether dropout is active
        @type train: L{bool}
        @return: output of shape (batch, out_dim)
        @rtype: L{pyidql.tensor.Tensor}
        """
        h = dense(params, self.name + "/input", tg.as_tensor(x))
        for i in range(self.n_blocks):
            h = self.block(params, i, h, rng=rng, train=train)
        h = self.activation.apply(h)
        return dense(params, self.name + "/output", h)


def constant_input(values):
    """
    Wrap a numpy batch as a constant 2-dimensional tensor.

    @param values: the batch, 1-dimensional inputs are treated as one column
    @type values: array-like
    @return: the tensor
    @rtype: L{pyidql.tensor.Tensor}
    """
    data = np.asarray(values, dtype=constants.DTYPE)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    return Tensor(data)
