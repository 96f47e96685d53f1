## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
from dataclasses import asdict

import logging
import typing

## third-party libraries
import numpy as np

## custom modules
from .joint_model import JointModel
from ..classes import Checkpoint, ModelConfig, ModuleSelector
from ..exceptions import ContractError, InitializationError
from ..util.constants import ALLOWED_SCHEMES, CHECKPOINT_VERSION, SCHEME_INIT_RULES

##-------------------start-of-_source_name()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _source_name(name:str, model_prefix:str, source_prefix:str) -> str:

    return source_prefix + name[len(model_prefix):]

##-------------------start-of-init_from_scheme()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def init_from_scheme(scheme:str,
                     asr_checkpoint:Checkpoint | None,
                     mt_checkpoint:Checkpoint | None,
                     config:ModelConfig,
                     seed:int = 0) -> JointModel:

    """

    Builds a joint model whose modules are copied from the pretrained single-task checkpoints.

    The speech front-end and lower speech layers come from the ASR model, the decoder and output projection from the MT model.
    The upper encoder layers come from the ASR model for st, jt and jt-s-asr, and from the MT text encoder for jt-s-mt and jt-proposed.
    jt also copies the MT text encoder into its own unshared text stack.

    Parameters:
    scheme (string) : One of ALLOWED_SCHEMES.
    asr_checkpoint (Checkpoint or None) : The pretrained speech-to-source model.
    mt_checkpoint (Checkpoint or None) : The pretrained text-to-target model.
    config (ModelConfig) : The joint model's architecture.
    seed (int) : Seed for any tensor no rule covers.

    Returns:
    (JointModel) : The initialized model.

    """

    if(scheme not in ALLOWED_SCHEMES):
        raise InitializationError(f"Unknown scheme '{scheme}'.")

    _model = JointModel(config, scheme, seed=seed)
    _sources = {"asr": asr_checkpoint, "mt": mt_checkpoint}
    _covered = set()

    for _model_prefix, _source, _source_prefix in SCHEME_INIT_RULES[scheme]:

        _selector = ModuleSelector(_model_prefix)
        _checkpoint = _sources[_source]

        for _name in _model.parameter_names():

            if(not _selector.matches(_name)):
                continue

            _wanted = _source_name(_name, _model_prefix, _source_prefix)

            if(_checkpoint is None or _wanted not in _checkpoint.tensors):
                raise InitializationError(f"Scheme '{scheme}' needs '{_wanted}' from the {_source} checkpoint for '{_name}', which is missing.", tensor_name=_wanted)

            _value = _checkpoint.tensors[_wanted]

            if(tuple(_value.shape) != _model.parameters[_name].shape):
                raise InitializationError(f"Shape mismatch for '{_name}': model {_model.parameters[_name].shape}, {_source} checkpoint {tuple(_value.shape)}.", tensor_name=_name)

            _model.parameters[_name].data = np.asarray(_value, dtype=np.float64).copy()
            _covered.add(_name)

    _uncovered = sorted(set(_model.parameter_names()) - _covered)

    if(_uncovered):
        logging.warning(f"Scheme '{scheme}' left {len(_uncovered)} tensors at random initialization, e.g. {_uncovered[0]}.")

    logging.info(f"Initialized a {scheme} model from pretrained checkpoints ({len(_covered)} tensors copied).")

    return _model

##-------------------start-of-sharing_map()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def sharing_map(model:JointModel) -> list[tuple[str, str]]:

    """

    (parameter name, owning component) pairs for the tensors both the speech and the text path read.

    A single-path layout shares nothing.

    """

    if(not (model.has_speech and model.has_text)):
        return []

    _shared_components = ["decoder", "output_projection"]

    if(model.shares_encoder):
        _shared_components.append("shared_encoder")

    _pairs = []

    for _name in model.parameter_names():
        _component = _name.split(".")[0]
        if(_component in _shared_components):
            _pairs.append((_name, _component))

    return _pairs

def tied_parameters(model:JointModel) -> list[str]:
    return [_name for _name, _ in sharing_map(model)]

##-------------------start-of-rollback_rules()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def rollback_rules(scheme:str) -> list[tuple[str, str, str]]:

    """

    Which pretrained checkpoint (and name prefix inside it) backs each module of a scheme.

    Single-task layouts roll back onto themselves.

    """

    if(scheme in SCHEME_INIT_RULES):
        return list(SCHEME_INIT_RULES[scheme])

    if(scheme == "asr"):
        return [(_prefix, "asr", _prefix) for _prefix in ("speech_frontend", "speech_encoder", "shared_encoder", "decoder", "output_projection")]

    if(scheme == "mt"):
        return [(_prefix, "mt", _prefix) for _prefix in ("text_embedding", "text_encoder", "decoder", "output_projection")]

    raise ContractError(f"No rollback rules for '{scheme}'.")

##-------------------start-of-checkpoint-conversion--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def to_checkpoint(model:JointModel, **metadata:typing.Any) -> Checkpoint:

    """

    Snapshots the model as float32 tensors. The layout and architecture go into the metadata so the checkpoint is self-describing.

    """

    _metadata = {"scheme": model.layout, "model_config": asdict(model.config)}
    _metadata.update(metadata)

    return Checkpoint(tensors={_name: _value.astype(np.float32) for _name, _value in model.state().items()},
                      metadata=_metadata,
                      version=CHECKPOINT_VERSION)

def from_checkpoint(checkpoint:Checkpoint, config:ModelConfig | None = None) -> JointModel:

    """

    Rebuilds a model from a checkpoint, using the stored architecture when config is None.

    """

    _layout = checkpoint.scheme

    if(_layout is None):
        raise ContractError("Checkpoint metadata does not name its scheme.")

    if(config is None):
        if("model_config" not in checkpoint.metadata):
            raise ContractError("Checkpoint metadata carries no model_config; pass one explicitly.")
        config = ModelConfig(**checkpoint.metadata["model_config"])

    return JointModel(config, _layout, parameters=checkpoint.tensors)
