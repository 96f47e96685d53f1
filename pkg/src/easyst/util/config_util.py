## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import os
import typing

## custom modules
from .constants import DEFAULT_EXPERIMENT_SETTINGS
from .util import _config_digest, _convert_to_correct_type, _parse_ratios

from ..classes import NOT_GIVEN, CorpusSpec, LossWeights, ModelConfig, TrainConfig
from ..exceptions import InvalidEasySTSettingsException

RESOLVED_CONFIG_NAME = "config.resolved"

##-------------------start-of-parse_config_text()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def parse_config_text(text:str, origin:str = "<config>") -> dict[str, typing.Any]:

    """

    Parses flat "key = value" lines. Blank lines and # comments are skipped, unknown keys are rejected.

    """

    _settings = {}

    for _line_number, _raw in enumerate(text.splitlines(), start=1):

        _line = _raw.split("#", 1)[0].strip()

        if(not _line):
            continue

        if("=" not in _line):
            raise InvalidEasySTSettingsException(f"{origin}:{_line_number}: expected 'key = value', got '{_raw.strip()}'.")

        _key, _value = (_part.strip() for _part in _line.split("=", 1))

        if(_key not in DEFAULT_EXPERIMENT_SETTINGS):
            raise InvalidEasySTSettingsException(f"{origin}:{_line_number}: unknown key '{_key}'.")

        _settings[_key] = _convert_to_correct_type(_key, _value)

    return _settings

def load_config(path:str) -> dict[str, typing.Any]:

    try:
        with open(path, "r", encoding="utf-8") as _file:
            return parse_config_text(_file.read(), origin=path)

    except FileNotFoundError:
        raise InvalidEasySTSettingsException(f"Config file {path} does not exist.")

##-------------------start-of-resolve_settings()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def resolve_settings(config_path:str | None = None, overrides:typing.Mapping[str, typing.Any] | None = None) -> dict[str, typing.Any]:

    """

    defaults < config file < overrides. Overrides equal to NOT_GIVEN are ignored.

    Returns:
    (dict) : Every known key with a typed value.

    """

    _settings = {_key: _convert_to_correct_type(_key, _value) for _key, _value in DEFAULT_EXPERIMENT_SETTINGS.items()}

    if(config_path is not None):
        _settings.update(load_config(config_path))

    for _key, _value in (overrides or {}).items():

        if(_key not in DEFAULT_EXPERIMENT_SETTINGS):
            raise InvalidEasySTSettingsException(f"Unknown setting '{_key}'.")

        _converted = _convert_to_correct_type(_key, _value)

        if(_converted is not NOT_GIVEN):
            _settings[_key] = _converted

    ## cross-key checks, the dataclasses repeat them
    corpus_spec_from(_settings)
    model_config_from(_settings)

    return _settings

##-------------------start-of-write_resolved()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def format_settings(settings:typing.Mapping[str, typing.Any]) -> str:

    return "".join(f"{_key} = {settings[_key]}\n" for _key in sorted(settings))

def write_resolved(settings:typing.Mapping[str, typing.Any], directory:str) -> str:

    _path = os.path.join(directory, RESOLVED_CONFIG_NAME)

    with open(_path, "w", encoding="utf-8", newline="\n") as _file:
        _file.write(f"# digest {_config_digest(settings)}\n")
        _file.write(format_settings(settings))

    return _path

##-------------------start-of-builders--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def corpus_spec_from(settings:typing.Mapping[str, typing.Any]) -> CorpusSpec:

    return CorpusSpec(src_vocab_size=settings["src_vocab_size"],
                      tgt_vocab_size=settings["tgt_vocab_size"],
                      min_len=settings["min_len"],
                      max_len=settings["max_len"],
                      min_frames_per_token=settings["min_frames_per_token"],
                      max_frames_per_token=settings["max_frames_per_token"],
                      feature_noise=settings["feature_noise"],
                      feature_dim=settings["feature_dim"],
                      train_size=settings["train_size"],
                      dev_size=settings["dev_size"],
                      test_size=settings["test_size"],
                      text_only_size=settings["text_only_size"],
                      seed=settings["seed"])

def model_config_from(settings:typing.Mapping[str, typing.Any]) -> ModelConfig:

    return ModelConfig(src_vocab_size=settings["src_vocab_size"],
                       tgt_vocab_size=settings["tgt_vocab_size"],
                       speech_feature_dim=settings["feature_dim"],
                       d_model=settings["d_model"],
                       n_heads=settings["n_heads"],
                       d_ffn=settings["d_ffn"],
                       n_speech_lower_layers=settings["n_speech_lower_layers"],
                       n_shared_encoder_layers=settings["n_shared_encoder_layers"],
                       n_decoder_layers=settings["n_decoder_layers"],
                       dropout=settings["dropout"],
                       max_positions=settings["max_positions"])

def train_config_from(settings:typing.Mapping[str, typing.Any], checkpoint_dir:str | None = None, **changes:typing.Any) -> TrainConfig:

    """

    Builds a TrainConfig; changes override individual fields, e.g. scheme or epochs for a pretraining run.

    """

    _fields = dict(scheme=settings["scheme"],
                   weights=LossWeights(alpha=settings["alpha"], lambda_=settings["lambda"], label_smoothing=settings["label_smoothing"]),
                   lr=settings["lr"],
                   adam_beta1=settings["adam_beta1"],
                   adam_beta2=settings["adam_beta2"],
                   adam_eps=settings["adam_eps"],
                   warmup_steps=settings["warmup_steps"],
                   epochs=settings["epochs"],
                   accumulation=settings["accumulation"],
                   seed=settings["seed"],
                   checkpoint_dir=checkpoint_dir,
                   keep_last=settings["keep_last"],
                   max_tokens_speech=settings["max_tokens_speech"],
                   max_tokens_text=settings["max_tokens_text"])

    _fields.update(changes)

    return TrainConfig(**_fields)

def ratios_from(settings:typing.Mapping[str, typing.Any]) -> list[float]:
    return _parse_ratios(settings["ratios"])
