## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import threading
import typing

## third-party libraries
import numpy as np

## custom modules
from ..exceptions import ContractError, GraphError

BackwardRule = typing.Callable[[np.ndarray], typing.Sequence[np.ndarray | None]]

##-------------------start-of-Tensor--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class Tensor:

    """

    A dense float64 array that can take part in a recorded graph.

    Leaves created with requires_grad=True collect gradients in grad. Results of operations only require a gradient
    while a Graph is recording and one of their operands requires it.

    """

    __array_priority__ = 1000

    def __init__(self, data:typing.Any, requires_grad:bool = False, name:str | None = None) -> None:

        """

        Parameters:
        data (array-like) : The values, copied to float64 unless already a float64 array.
        requires_grad (bool) : Whether backward should fill grad for this tensor.
        name (string or None) : An optional label, used by parameters.

        """

        _array = np.asarray(data, dtype=np.float64)

        self.data:np.ndarray = _array
        self.requires_grad = requires_grad
        self.grad:np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:

        if(self.data.size != 1):
            raise ContractError(f"item() needs a single element tensor, got shape {self.shape}.")

        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        _label = f" name={self.name}" if self.name else ""
        return f"<Tensor shape={self.shape}{_label} requires_grad={self.requires_grad}>"

    ## operators are thin aliases over engine.ops, imported lazily to keep the two modules acyclic

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)

    def sum(self, axis:int | tuple[int, ...] | None = None, keepdims:bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape:int):
        from . import ops
        return ops.reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

##-------------------start-of-_Record--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class _Record:

    __slots__ = ("output", "parents", "rule")

    def __init__(self, output:Tensor, parents:tuple[Tensor, ...], rule:BackwardRule) -> None:
        self.output = output
        self.parents = parents
        self.rule = rule

##-------------------start-of-Graph--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class Graph:

    """

    A tape of recorded operations, active inside a with-block on the current thread.

    backward() walks the tape in exact reverse recording order and may run once. Each thread records into its own
    graph, so evaluation threads can run forward passes in parallel.

    """

    _local = threading.local()

    def __init__(self) -> None:
        self._records:list[_Record] = []
        self._participants:dict[int, Tensor] = {}
        self._consumed = False

    def __enter__(self) -> "Graph":

        if(self._consumed):
            raise GraphError("This graph was already consumed by backward; record a new one.")

        _stack = Graph._stack()
        _stack.append(self)

        return self

    def __exit__(self, *exc_info) -> None:
        Graph._stack().pop()

    @staticmethod
    def _stack() -> list["Graph"]:

        if(not hasattr(Graph._local, "stack")):
            Graph._local.stack = []

        return Graph._local.stack

    @staticmethod
    def current() -> "Graph | None":

        _stack = Graph._stack()

        return _stack[-1] if _stack else None

    @property
    def num_records(self) -> int:
        return len(self._records)

    def record(self, output:Tensor, parents:tuple[Tensor, ...], rule:BackwardRule) -> None:

        self._records.append(_Record(output, parents, rule))

        for _parent in parents:
            self.register(_parent)

    def register(self, tensor:Tensor) -> None:

        """

        Marks a tensor as part of this graph, so it receives an all-zero gradient when it is not on the loss path.

        """

        if(tensor.requires_grad):
            self._participants[id(tensor)] = tensor

    def backward(self, loss:Tensor) -> None:

        """

        Accumulates d(loss)/d(tensor) into the grad of every participating tensor.

        Parameters:
        loss (Tensor) : A single element tensor recorded in this graph.

        """

        if(self._consumed):
            raise GraphError("backward was already called on this graph; record a new forward pass.")

        if(loss.size != 1):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}.")

        self._consumed = True

        loss.grad = np.ones_like(loss.data)

        for _record in reversed(self._records):

            if(_record.output.grad is None):
                continue

            _grads = _record.rule(_record.output.grad)

            for _parent, _grad in zip(_record.parents, _grads):

                if(not _parent.requires_grad or _grad is None):
                    continue

                if(_parent.grad is None):
                    _parent.grad = np.array(_grad, dtype=np.float64, copy=True).reshape(_parent.shape)
                else:
                    _parent.grad = _parent.grad + _grad

        for _tensor in self._participants.values():
            if(_tensor.grad is None):
                _tensor.grad = np.zeros_like(_tensor.data)

        ## free the tape, intermediate tensors go with it
        self._records = []
        self._participants = {}
