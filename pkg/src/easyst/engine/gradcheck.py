## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import typing

## third-party libraries
import numpy as np

## custom modules
from .tensor import Graph, Tensor
from ..exceptions import ContractError

##-------------------start-of-grad_check()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def grad_check(f:typing.Callable[[Tensor], Tensor], x:Tensor | np.ndarray, eps:float = 1e-6) -> float:

    """

    Compares the recorded gradient of a scalar function against central finite differences.

    Parameters:
    f (callable) : Maps a tensor to a single element tensor.
    x (Tensor or array) : The point to check at.
    eps (float) : The finite difference step, in [1e-6, 1e-3].

    Returns:
    (float) : max over components of |analytic - numeric| / (|numeric| + 1e-8).

    """

    if(not 1e-6 <= eps <= 1e-3):
        raise ContractError(f"eps must be in [1e-6, 1e-3], got {eps}.")

    _point = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64, copy=True)

    _leaf = Tensor(_point.copy(), requires_grad=True)

    with Graph() as _graph:
        _out = f(_leaf)

        if(_out.size != 1):
            raise ContractError(f"grad_check needs a scalar valued function, got shape {_out.shape}.")

        if(not _out.requires_grad):
            _analytic = np.zeros_like(_point)
        else:
            _graph.backward(_out)
            _analytic = _leaf.grad if _leaf.grad is not None else np.zeros_like(_point)

    _numeric = np.zeros_like(_point)

    for _index in np.ndindex(_point.shape):
        _plus = _point.copy()
        _minus = _point.copy()
        _plus[_index] += eps
        _minus[_index] -= eps
        _numeric[_index] = (f(Tensor(_plus)).item() - f(Tensor(_minus)).item()) / (2.0 * eps)

    return float(np.max(np.abs(_analytic - _numeric) / (np.abs(_numeric) + 1e-8)))
