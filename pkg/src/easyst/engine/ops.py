## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import typing

## third-party libraries
import numpy as np

## custom modules
from .tensor import Graph, Tensor
from ..exceptions import DimensionError

Operand = typing.Union[Tensor, np.ndarray, float, int]

##-------------------start-of-_as_tensor()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _as_tensor(value:Operand) -> Tensor:

    return value if isinstance(value, Tensor) else Tensor(value)

##-------------------start-of-_make()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _make(data:np.ndarray, parents:tuple[Tensor, ...], rule) -> Tensor:

    """

    Wraps an operation result, recording it on the current graph when an operand needs a gradient.

    """

    _graph = Graph.current()

    if(_graph is not None and any(_parent.requires_grad for _parent in parents)):
        _out = Tensor(data, requires_grad=True)
        _graph.record(_out, parents, rule)
        return _out

    return Tensor(data)

##-------------------start-of-_unbroadcast()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _unbroadcast(grad:np.ndarray, shape:tuple[int, ...]) -> np.ndarray:

    """

    Sums a broadcast gradient back down to the operand's shape.

    """

    while(grad.ndim > len(shape)):
        grad = grad.sum(axis=0)

    for _axis, _size in enumerate(shape):
        if(_size == 1 and grad.shape[_axis] != 1):
            grad = grad.sum(axis=_axis, keepdims=True)

    return grad

def _broadcast_check(operation:str, a:Tensor, b:Tensor) -> None:

    try:
        np.broadcast_shapes(a.shape, b.shape)

    except ValueError:
        raise DimensionError(operation, a.shape, b.shape)

##-------------------start-of-elementwise--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def add(a:Operand, b:Operand) -> Tensor:

    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("add", a, b)

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _make(a.data + b.data, (a, b), rule)

def sub(a:Operand, b:Operand) -> Tensor:

    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("sub", a, b)

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _make(a.data - b.data, (a, b), rule)

def mul(a:Operand, b:Operand) -> Tensor:

    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("mul", a, b)

    def rule(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return _make(a.data * b.data, (a, b), rule)

def div(a:Operand, b:Operand) -> Tensor:

    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("div", a, b)

    def rule(grad):
        return _unbroadcast(grad / b.data, a.shape), _unbroadcast(-grad * a.data / (b.data * b.data), b.shape)

    return _make(a.data / b.data, (a, b), rule)

def scale(a:Operand, factor:float) -> Tensor:

    a = _as_tensor(a)

    def rule(grad):
        return (grad * factor,)

    return _make(a.data * factor, (a,), rule)

def exp(a:Operand) -> Tensor:

    a = _as_tensor(a)
    _out = np.exp(a.data)

    def rule(grad):
        return (grad * _out,)

    return _make(_out, (a,), rule)

def log(a:Operand) -> Tensor:

    a = _as_tensor(a)

    def rule(grad):
        return (grad / a.data,)

    return _make(np.log(a.data), (a,), rule)

def sqrt(a:Operand) -> Tensor:

    """

    Square root whose gradient is taken as 0 where the value is 0.

    """

    a = _as_tensor(a)
    _out = np.sqrt(a.data)

    def rule(grad):
        _safe = np.where(_out > 0.0, _out, 1.0)
        return (np.where(_out > 0.0, grad / (2.0 * _safe), 0.0),)

    return _make(_out, (a,), rule)

def relu(a:Operand) -> Tensor:

    a = _as_tensor(a)
    _active = a.data > 0.0

    def rule(grad):
        return (grad * _active,)

    return _make(a.data * _active, (a,), rule)

def clamp_min(a:Operand, floor:float) -> Tensor:

    a = _as_tensor(a)
    _above = a.data > floor

    def rule(grad):
        return (grad * _above,)

    return _make(np.maximum(a.data, floor), (a,), rule)

##-------------------start-of-shape-ops--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def matmul(a:Operand, b:Operand) -> Tensor:

    """

    Batched matrix product over the last two axes. C = A.B, dA = dC.B^T, dB = A^T.dC.

    """

    a, b = _as_tensor(a), _as_tensor(b)

    if(a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]):
        raise DimensionError("matmul", a.shape, b.shape)

    try:
        _out = np.matmul(a.data, b.data)

    except ValueError:
        raise DimensionError("matmul", a.shape, b.shape)

    def rule(grad):
        _grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        _grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(_grad_a, a.shape), _unbroadcast(_grad_b, b.shape)

    return _make(_out, (a, b), rule)

def transpose(a:Operand, axes:typing.Sequence[int] | None = None) -> Tensor:

    """

    Permutes axes, swapping the last two when axes is None.

    """

    a = _as_tensor(a)

    if(axes is None):
        axes = list(range(a.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]

    _inverse = np.argsort(axes)

    def rule(grad):
        return (np.transpose(grad, _inverse),)

    return _make(np.transpose(a.data, axes), (a,), rule)

def reshape(a:Operand, shape:typing.Sequence[int]) -> Tensor:

    a = _as_tensor(a)
    _original = a.shape

    def rule(grad):
        return (grad.reshape(_original),)

    return _make(a.data.reshape(tuple(shape)), (a,), rule)

def getitem(a:Operand, key:typing.Any) -> Tensor:

    """

    Basic (non-fancy) indexing, e.g. picking one sample out of a batch.

    """

    a = _as_tensor(a)

    def rule(grad):
        _full = np.zeros_like(a.data)
        _full[key] += grad
        return (_full,)

    return _make(a.data[key], (a,), rule)

def sum(a:Operand, axis:int | tuple[int, ...] | None = None, keepdims:bool = False) -> Tensor:

    a = _as_tensor(a)

    def rule(grad):
        if(axis is not None and not keepdims):
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), rule)

def mean(a:Operand, axis:int | tuple[int, ...] | None = None, keepdims:bool = False) -> Tensor:

    a = _as_tensor(a)
    _count = a.size if axis is None else int(np.prod([a.shape[_axis] for _axis in np.atleast_1d(axis)]))

    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / _count)

##-------------------start-of-normalizers--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def softmax(a:Operand, axis:int = -1) -> Tensor:

    a = _as_tensor(a)
    _shifted = np.exp(a.data - a.data.max(axis=axis, keepdims=True))
    _out = _shifted / _shifted.sum(axis=axis, keepdims=True)

    def rule(grad):
        return (_out * (grad - (grad * _out).sum(axis=axis, keepdims=True)),)

    return _make(_out, (a,), rule)

def softmax_cols(scores:Operand) -> Tensor:

    """

    Normalizes each column (axis -2), so column j of the result is a distribution over the rows.

    """

    return softmax(scores, axis=-2)

def log_softmax(a:Operand, axis:int = -1) -> Tensor:

    a = _as_tensor(a)
    _shifted = a.data - a.data.max(axis=axis, keepdims=True)
    _out = _shifted - np.log(np.exp(_shifted).sum(axis=axis, keepdims=True))

    def rule(grad):
        return (grad - np.exp(_out) * grad.sum(axis=axis, keepdims=True),)

    return _make(_out, (a,), rule)

def layer_norm(x:Operand, gain:Operand, bias:Operand, eps:float = 1e-5) -> Tensor:

    """

    Normalizes over the last axis, then applies the learned gain and bias.

    """

    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)

    if(gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]):
        raise DimensionError("layer_norm", x.shape, gain.shape, bias.shape)

    _centered = x.data - x.data.mean(axis=-1, keepdims=True)
    _inv_std = 1.0 / np.sqrt((_centered * _centered).mean(axis=-1, keepdims=True) + eps)
    _normed = _centered * _inv_std

    def rule(grad):
        _grad_normed = grad * gain.data
        _grad_x = _inv_std * (_grad_normed
                              - _grad_normed.mean(axis=-1, keepdims=True)
                              - _normed * (_grad_normed * _normed).mean(axis=-1, keepdims=True))
        return _grad_x, _unbroadcast(grad * _normed, gain.shape), _unbroadcast(grad, bias.shape)

    return _make(_normed * gain.data + bias.data, (x, gain, bias), rule)

##-------------------start-of-lookups--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def gather(table:Tensor, ids:np.ndarray) -> Tensor:

    """

    Embedding lookup: rows of table picked by an integer array of any shape.

    """

    ids = np.asarray(ids, dtype=np.int64)

    def rule(grad):
        _full = np.zeros_like(table.data)
        np.add.at(_full, ids, grad)
        return (_full,)

    return _make(table.data[ids], (table,), rule)

def take_last(a:Operand, ids:np.ndarray) -> Tensor:

    """

    Picks a[..., ids[...]] along the last axis, e.g. the log-probability of each reference token.

    """

    a = _as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)[..., None]

    def rule(grad):
        _full = np.zeros_like(a.data)
        np.put_along_axis(_full, ids, grad[..., None], axis=-1)
        return (_full,)

    return _make(np.take_along_axis(a.data, ids, axis=-1)[..., 0], (a,), rule)

##-------------------start-of-regularizers--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def dropout(x:Operand, rate:float, rng:np.random.Generator | None) -> Tensor:

    """

    Inverted dropout. Without a generator (eval mode) or at rate 0 it returns x itself.

    """

    x = _as_tensor(x)

    if(rng is None or rate <= 0.0):
        return x

    _mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def rule(grad):
        return (grad * _mask,)

    return _make(x.data * _mask, (x,), rule)

def stop_gradient(x:Operand) -> Tensor:

    """

    Identity forward, nothing flows back. x still joins the graph, so it ends backward with a zero gradient.

    """

    x = _as_tensor(x)

    _graph = Graph.current()

    if(_graph is not None):
        _graph.register(x)

    return Tensor(x.data)
