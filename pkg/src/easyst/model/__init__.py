## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

from .joint_model import JointModel
from .schemes import init_from_scheme, tied_parameters, sharing_map, rollback_rules, to_checkpoint, from_checkpoint

__all__ = ["JointModel", "init_from_scheme", "tied_parameters", "sharing_map", "rollback_rules", "to_checkpoint", "from_checkpoint"]
