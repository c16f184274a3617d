"""
Dense float64 tensor arithmetic with a recorded forward pass and reverse-mode
gradients.

A :class:`ComputationRecord` is an append-only list of primitive applications.
Leaves are either named parameters (trainable) or constants; every other node
is the output of exactly one primitive, so the list is topologically ordered
by construction. Tensors are plain ``numpy`` arrays of dtype float64.
"""
import logging
from collections.abc import Mapping

import numpy as np
from scipy import sparse, special

from keyword_ctr import ContractError, NumericalError

LOG = logging.getLogger(__name__)

FLOAT = np.float64


def as_tensor(value):
    return np.asarray(value, dtype=FLOAT)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Primitive:
    name = 'primitive'

    def forward(self, *values):
        raise NotImplementedError

    def backward(self, grad, out, *values):
        """Return one gradient (or None) per input."""
        raise NotImplementedError


class Add(Primitive):
    name = 'add'

    def forward(self, a, b):
        return a + b

    def backward(self, grad, out, a, b):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Scale(Primitive):
    """``factor * x + offset`` with constant factor and offset."""
    name = 'scale'

    def __init__(self, factor, offset=0.0):
        self.factor = as_tensor(factor)
        self.offset = as_tensor(offset)

    def forward(self, x):
        out = x * self.factor + self.offset
        if out.shape != x.shape:
            raise ContractError('scale constants must not change the shape {}'.format(x.shape))
        return out

    def backward(self, grad, out, x):
        return (grad * self.factor,)


class Multiply(Primitive):
    name = 'multiply'

    def forward(self, a, b):
        return a * b

    def backward(self, grad, out, a, b):
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class MatMul(Primitive):
    """``x @ w`` for a 2-d weight ``w``; leading axes of ``x`` are batch axes."""
    name = 'matmul'

    def forward(self, x, w):
        if w.ndim != 2 or x.shape[-1] != w.shape[0]:
            raise ContractError('matmul shapes {} and {} do not align'.format(x.shape, w.shape))
        return x @ w

    def backward(self, grad, out, x, w):
        gx = grad @ w.T
        gw = x.reshape(-1, x.shape[-1]).T @ grad.reshape(-1, w.shape[1])
        return gx, gw


class Concat(Primitive):
    name = 'concat'

    def __init__(self, axis=-1):
        self.axis = axis

    def forward(self, *values):
        return np.concatenate(values, axis=self.axis)

    def backward(self, grad, out, *values):
        bounds = np.cumsum([v.shape[self.axis] for v in values])[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Gather(Primitive):
    """Row lookup ``table[index]`` for an integer index array of any shape."""
    name = 'gather'

    def __init__(self, index):
        self.index = np.asarray(index, dtype=np.int64)

    def forward(self, table):
        return table[self.index]

    def backward(self, grad, out, table):
        # scatter-add of the looked-up rows back onto the table rows
        flat = self.index.reshape(-1)
        scatter = sparse.csr_matrix((np.ones(flat.size), (flat, np.arange(flat.size))),
                                    shape=(table.shape[0], flat.size))
        rows = grad.reshape(flat.size, int(np.prod(table.shape[1:], dtype=np.int64)))
        return (np.asarray(scatter @ rows).reshape(table.shape),)


class Take(Primitive):
    """Select position ``index`` along ``axis``, dropping the axis."""
    name = 'take'

    def __init__(self, index, axis):
        self.index = index
        self.axis = axis

    def forward(self, x):
        return np.take(x, self.index, axis=self.axis)

    def backward(self, grad, out, x):
        gx = np.zeros_like(x)
        slicer = [slice(None)] * x.ndim
        slicer[self.axis] = self.index
        gx[tuple(slicer)] = grad
        return (gx,)


class Reshape(Primitive):
    name = 'reshape'

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        return x.reshape(self.shape)

    def backward(self, grad, out, x):
        return (grad.reshape(x.shape),)


class BroadcastTo(Primitive):
    name = 'broadcast'

    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        return np.array(np.broadcast_to(x, self.shape))

    def backward(self, grad, out, x):
        return (_unbroadcast(grad, x.shape),)


class Sum(Primitive):
    name = 'sum'

    def __init__(self, axis=None):
        self.axis = axis

    def forward(self, x):
        return np.sum(x, axis=self.axis)

    def backward(self, grad, out, x):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, x.shape).copy(),)


class Mean(Sum):
    name = 'mean'

    def forward(self, x):
        return np.mean(x, axis=self.axis)

    def backward(self, grad, out, x):
        count = x.size if self.axis is None else x.shape[self.axis]
        (g,) = super().backward(grad, out, x)
        return (g / count,)


class SparseMatMul(Primitive):
    """``matrix @ x`` for a constant scipy.sparse matrix (mean over neighbor sets)."""
    name = 'sparse_matmul'

    def __init__(self, matrix):
        self.matrix = matrix

    def forward(self, x):
        if self.matrix.shape[1] != x.shape[0]:
            raise ContractError('operator of shape {} cannot act on {}'
                                .format(self.matrix.shape, x.shape))
        return np.asarray(self.matrix @ x)

    def backward(self, grad, out, x):
        return (np.asarray(self.matrix.T @ grad),)


class Sigmoid(Primitive):
    name = 'sigmoid'

    def forward(self, x):
        return special.expit(x)

    def backward(self, grad, out, x):
        return (grad * out * (1.0 - out),)


class Tanh(Primitive):
    name = 'tanh'

    def forward(self, x):
        return np.tanh(x)

    def backward(self, grad, out, x):
        return (grad * (1.0 - out * out),)


class Relu(Primitive):
    name = 'relu'

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, grad, out, x):
        return (grad * (x > 0.0),)


class Log(Primitive):
    name = 'log'

    def forward(self, x):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.log(x)

    def backward(self, grad, out, x):
        return (grad / x,)


class Clip(Primitive):
    name = 'clip'

    def __init__(self, low, high):
        self.low = low
        self.high = high

    def forward(self, x):
        return np.clip(x, self.low, self.high)

    def backward(self, grad, out, x):
        return (grad * ((x >= self.low) & (x <= self.high)),)


class MaskedSoftmax(Primitive):
    """
    Softmax along ``axis`` over the entries where ``mask`` is 1.

    Masked entries get weight 0; a row with no unmasked entry is all zeros.
    """
    name = 'masked_softmax'

    def __init__(self, mask, axis=-1):
        self.mask = np.asarray(mask, dtype=bool)
        self.axis = axis

    def forward(self, x):
        shifted = np.where(self.mask, x, -np.inf)
        top = np.max(shifted, axis=self.axis, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.where(self.mask, np.exp(np.where(self.mask, x, 0.0) - top), 0.0)
        total = np.sum(e, axis=self.axis, keepdims=True)
        return e / np.where(total > 0.0, total, 1.0)

    def backward(self, grad, out, x):
        inner = np.sum(grad * out, axis=self.axis, keepdims=True)
        return (out * (grad - inner),)


class Node:
    """Handle on one value of a :class:`ComputationRecord`."""
    __slots__ = ('record', 'index')

    def __init__(self, record, index):
        self.record = record
        self.index = index

    @property
    def value(self):
        return self.record.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return '<Node {} shape={}>'.format(self.index, self.shape)


class Operation:
    __slots__ = ('primitive', 'inputs', 'output')

    def __init__(self, primitive, inputs, output):
        self.primitive = primitive
        self.inputs = inputs
        self.output = output


class ComputationRecord:
    """
    Ordered record of a forward pass.

    Parameters are registered by name and are the only nodes that receive a
    gradient from :func:`forward_backward`. Parameter arrays are referenced,
    not copied, so they must not be updated while the record is in use.
    """

    def __init__(self):
        self.values = []
        self.trainable = []
        self.operations = []
        self.parameters = {}

    def __len__(self):
        return len(self.values)

    def _push(self, value, trainable):
        self.values.append(value)
        self.trainable.append(trainable)
        return Node(self, len(self.values) - 1)

    def parameter(self, name, value):
        if name in self.parameters:
            raise ContractError('parameter {!r} registered twice'.format(name))
        node = self._push(as_tensor(value), True)
        self.parameters[name] = node.index
        return node

    def constant(self, value):
        return self._push(as_tensor(value), False)

    def apply(self, primitive, *inputs):
        for node in inputs:
            if node.record is not self:
                raise ContractError('{} mixes nodes of different records'.format(primitive.name))
        out = as_tensor(primitive.forward(*(node.value for node in inputs)))
        if not np.all(np.isfinite(out)):
            raise NumericalError(primitive.name, 'non-finite value in forward pass')
        trainable = any(self.trainable[node.index] for node in inputs)
        node = self._push(out, trainable)
        self.operations.append(Operation(primitive, tuple(n.index for n in inputs), node.index))
        return node

    def replay(self):
        """Recompute every value from the leaves, in record order."""
        values = list(self.values)
        for op in self.operations:
            values[op.output] = as_tensor(op.primitive.forward(*(values[i] for i in op.inputs)))
        return values


def forward_backward(record, loss_node):
    """
    Reverse-mode gradients of a scalar node with respect to every registered
    parameter. Parameters the loss does not depend on get zero gradients.
    """
    if isinstance(loss_node, Node):
        if loss_node.record is not record:
            raise ContractError('loss node belongs to a different computation record')
        loss_index = loss_node.index
    else:
        loss_index = int(loss_node)
    if not 0 <= loss_index < len(record.values):
        raise ContractError('loss index {} outside a record of {} nodes'.format(loss_index, len(record.values)))
    loss = record.values[loss_index]
    if loss.size != 1:
        raise ContractError('loss node must be scalar, got shape {}'.format(loss.shape))

    grads = [None] * len(record.values)
    grads[loss_index] = np.ones_like(loss)
    for op in reversed(record.operations):
        if op.output > loss_index:
            continue
        grad = grads[op.output]
        if grad is None or not record.trainable[op.output]:
            continue
        inputs = [record.values[i] for i in op.inputs]
        in_grads = op.primitive.backward(grad, record.values[op.output], *inputs)
        for i, g in zip(op.inputs, in_grads):
            if g is None or not record.trainable[i]:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericalError(op.primitive.name, 'non-finite gradient in backward pass')
            grads[i] = g if grads[i] is None else grads[i] + g

    return {
        name: np.zeros_like(record.values[i]) if grads[i] is None else np.asarray(grads[i])
        for name, i in record.parameters.items()
    }


def finite_difference_gradient(f, params, step=1e-5):
    """
    Central-difference gradient of the scalar function ``f(params)``.

    ``params`` maps identifiers to arrays (a list is keyed by position). The
    arrays are perturbed in place one coordinate at a time and restored.
    """
    if step <= 0:
        raise ContractError('finite-difference step must be positive')
    if not isinstance(params, Mapping):
        params = {str(i): p for i, p in enumerate(params)}

    def evaluate():
        value = float(f(params))
        if not np.isfinite(value):
            raise NumericalError('finite_difference_gradient', 'function returned {}'.format(value))
        return value

    grads = {}
    for name, p in params.items():
        flat = p.reshape(-1)
        if not np.shares_memory(flat, p):
            raise ContractError('parameter {!r} must be a contiguous array'.format(name))
        g = np.zeros(flat.size, dtype=FLOAT)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = evaluate()
            flat[j] = orig - step
            down = evaluate()
            flat[j] = orig
            g[j] = (up - down) / (2.0 * step)
        grads[name] = g.reshape(p.shape)
    return grads


def relative_error(a, b):
    """max over coordinates of |a - b| / max(1, |a|, |b|)."""
    a = as_tensor(a)
    b = as_tensor(b)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


# Thin builders so model code reads as arithmetic.

def add(a, b):
    return a.record.apply(Add(), a, b)


def scale(x, factor, offset=0.0):
    return x.record.apply(Scale(factor, offset), x)


def multiply(a, b):
    return a.record.apply(Multiply(), a, b)


def matmul(x, w):
    return x.record.apply(MatMul(), x, w)


def concat(nodes, axis=-1):
    return nodes[0].record.apply(Concat(axis), *nodes)


def gather(table, index):
    return table.record.apply(Gather(index), table)


def take(x, index, axis):
    return x.record.apply(Take(index, axis), x)


def reshape(x, shape):
    return x.record.apply(Reshape(shape), x)


def broadcast_to(x, shape):
    return x.record.apply(BroadcastTo(shape), x)


def reduce_sum(x, axis=None):
    return x.record.apply(Sum(axis), x)


def reduce_mean(x, axis=None):
    return x.record.apply(Mean(axis), x)


def sparse_matmul(matrix, x):
    return x.record.apply(SparseMatMul(matrix), x)


def sigmoid(x):
    return x.record.apply(Sigmoid(), x)


def tanh(x):
    return x.record.apply(Tanh(), x)


def relu(x):
    return x.record.apply(Relu(), x)


def log(x):
    return x.record.apply(Log(), x)


def clip(x, low, high):
    return x.record.apply(Clip(low, high), x)


def masked_softmax(x, mask, axis=-1):
    return x.record.apply(MaskedSoftmax(mask, axis), x)
