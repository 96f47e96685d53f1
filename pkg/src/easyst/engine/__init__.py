## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

from .tensor import Tensor, Graph
from .gradcheck import grad_check
from . import ops

__all__ = ["Tensor", "Graph", "grad_check", "ops"]
