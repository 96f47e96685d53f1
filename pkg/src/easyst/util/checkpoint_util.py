## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import glob
import json
import logging
import os
import struct
import typing

## third-party libraries
import numpy as np

## custom modules
from .constants import CHECKPOINT_MAGIC, CHECKPOINT_SUFFIX, CHECKPOINT_VERSION
from ..classes import Checkpoint
from ..exceptions import AveragingError, CheckpointFormatError

##-------------------start-of-serialize_checkpoint()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def serialize_checkpoint(checkpoint:Checkpoint) -> bytes:

    """

    Canonical bytes of a checkpoint.

    Layout: magic "BMTC", u32 version, u32 record count, then per record (sorted by name) u16 name length, UTF-8 name,
    u8 rank, one u32 per dim and the little-endian float32 payload. A u32-length JSON metadata trailer (sorted keys) follows the records.

    """

    _parts = [CHECKPOINT_MAGIC, struct.pack("<II", checkpoint.version, len(checkpoint.tensors))]

    for _name in sorted(checkpoint.tensors):

        _value = np.asarray(checkpoint.tensors[_name], dtype="<f4")
        _encoded = _name.encode("utf-8")

        _parts.append(struct.pack("<H", len(_encoded)))
        _parts.append(_encoded)
        _parts.append(struct.pack("<B", _value.ndim))
        _parts.append(struct.pack(f"<{_value.ndim}I", *_value.shape))
        _parts.append(np.ascontiguousarray(_value).tobytes())

    _metadata = json.dumps(checkpoint.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")

    _parts.append(struct.pack("<I", len(_metadata)))
    _parts.append(_metadata)

    return b"".join(_parts)

##-------------------start-of-_Reader--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class _Reader:

    def __init__(self, payload:bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, count:int, what:str) -> bytes:

        if(self.offset + count > len(self.payload)):
            raise CheckpointFormatError(f"Truncated checkpoint while reading {what}", self.offset)

        _chunk = self.payload[self.offset:self.offset + count]
        self.offset += count

        return _chunk

    def unpack(self, fmt:str, what:str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

##-------------------start-of-deserialize_checkpoint()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def deserialize_checkpoint(payload:bytes) -> Checkpoint:

    _reader = _Reader(payload)

    if(_reader.take(4, "magic") != CHECKPOINT_MAGIC):
        raise CheckpointFormatError("Bad magic bytes, not a checkpoint", 0)

    _version, _count = _reader.unpack("<II", "header")

    if(_version != CHECKPOINT_VERSION):
        raise CheckpointFormatError(f"Unsupported checkpoint version {_version}", 4)

    _tensors:dict[str, np.ndarray] = {}

    for _ in range(_count):

        _start = _reader.offset
        (_name_length,) = _reader.unpack("<H", "name length")

        try:
            _name = _reader.take(_name_length, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError("Tensor name is not valid UTF-8", _start)

        if(_name in _tensors):
            raise CheckpointFormatError(f"Duplicate tensor name '{_name}'", _start)

        (_rank,) = _reader.unpack("<B", f"rank of {_name}")
        _shape = _reader.unpack(f"<{_rank}I", f"dims of {_name}")
        _size = int(np.prod(_shape, dtype=np.int64))

        _tensors[_name] = np.frombuffer(_reader.take(4 * _size, f"payload of {_name}"), dtype="<f4").reshape(_shape).astype(np.float32)

    (_metadata_length,) = _reader.unpack("<I", "metadata length")
    _metadata_start = _reader.offset

    try:
        _metadata = json.loads(_reader.take(_metadata_length, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointFormatError("Metadata is not valid JSON", _metadata_start)

    if(_reader.offset != len(payload)):
        raise CheckpointFormatError(f"{len(payload) - _reader.offset} trailing bytes after the metadata", _reader.offset)

    return Checkpoint(tensors=_tensors, metadata=_metadata, version=_version)

##-------------------start-of-save_checkpoint()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def save_checkpoint(checkpoint:Checkpoint, path:str) -> str:

    """

    Writes the checkpoint through a temporary file, so a reader never sees half a checkpoint.

    Returns:
    (string) : The path written.

    """

    _directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(_directory, exist_ok=True)

    _temporary = path + ".part"

    with open(_temporary, "wb") as _file:
        _file.write(serialize_checkpoint(checkpoint))

    os.replace(_temporary, path)

    return path

def load_checkpoint(path:str) -> Checkpoint:

    with open(path, "rb") as _file:
        return deserialize_checkpoint(_file.read())

##-------------------start-of-average_checkpoints()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def average_checkpoints(sources:typing.Sequence[str | Checkpoint]) -> Checkpoint:

    """

    Elementwise mean of checkpoints with identical name/shape sets.

    Values are sorted along the checkpoint axis before summing, so the result does not depend on the source order.

    Parameters:
    sources (sequence of paths or Checkpoints) : At least one.

    Returns:
    (Checkpoint) : The average, with the sorted source list in metadata["averaged_from"].

    """

    if(not sources):
        raise AveragingError("No checkpoints to average.")

    _labels = [_source if isinstance(_source, str) else f"<in-memory {_index}>" for _index, _source in enumerate(sources)]
    _checkpoints = [load_checkpoint(_source) if isinstance(_source, str) else _source for _source in sources]

    _reference = _checkpoints[0]
    _names = _reference.names()

    for _label, _checkpoint in zip(_labels[1:], _checkpoints[1:]):

        _other = _checkpoint.names()

        if(_other != _names):
            _first = sorted(set(_names).symmetric_difference(_other))[0]
            raise AveragingError(f"Tensor '{_first}' is not present in every checkpoint (first mismatch in {_label}).")

        for _name in _names:
            if(_checkpoint.tensors[_name].shape != _reference.tensors[_name].shape):
                raise AveragingError(f"Tensor '{_name}' has shape {_checkpoint.tensors[_name].shape} in {_label}, {_reference.tensors[_name].shape} elsewhere.")

    _averaged = {}

    for _name in _names:
        _stack = np.sort(np.stack([_checkpoint.tensors[_name].astype(np.float64) for _checkpoint in _checkpoints]), axis=0)
        _averaged[_name] = (_stack.sum(axis=0) / len(_checkpoints)).astype(np.float32)

    _metadata = {_key: _value for _key, _value in _reference.metadata.items() if _key in ("scheme", "model_config", "config_digest")}
    _metadata["averaged_from"] = sorted(os.path.basename(_label) for _label in _labels)

    return Checkpoint(tensors=_averaged, metadata=_metadata, version=CHECKPOINT_VERSION)

##-------------------start-of-list_checkpoints()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def list_checkpoints(directory:str) -> list[str]:

    """

    Checkpoint files in a directory, oldest first (names embed a zero-padded epoch).

    """

    return sorted(glob.glob(os.path.join(directory, f"*{CHECKPOINT_SUFFIX}")))

def prune_checkpoints(directory:str, keep_last:int) -> list[str]:

    """

    Deletes all but the newest keep_last checkpoints.

    Returns:
    (list of string) : The deleted paths.

    """

    _paths = list_checkpoints(directory)
    _stale = _paths[:-keep_last] if len(_paths) > keep_last else []

    for _path in _stale:
        os.remove(_path)
        logging.info(f"Pruned checkpoint {_path}.")

    return _stale
