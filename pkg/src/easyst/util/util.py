## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import hashlib
import typing

## custom modules
from .constants import ALLOWED_SCHEMES, DEFAULT_EXPERIMENT_SETTINGS

from ..classes import NotGiven, NOT_GIVEN
from ..exceptions import InvalidEasySTSettingsException

##-------------------start-of-_string_to_bool()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _string_to_bool(string:str) -> bool:

    return string.lower() in ['true', '1', 'yes', 'y', 't']

##-------------------start-of-_parse_ratios()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _parse_ratios(value:str | typing.Iterable[float]) -> list[float]:

    """

    "0,0.25,1" -> [0.0, 0.25, 1.0]

    """

    if(isinstance(value, str)):
        _items = [_item.strip() for _item in value.split(",") if _item.strip()]
    else:
        _items = list(value)

    try:
        return [float(_item) for _item in _items]
    except ValueError:
        raise InvalidEasySTSettingsException(f"Could not parse ratios '{value}'.")

def _valid_ratios(value:str) -> bool:

    try:
        _ratios = _parse_ratios(value)
    except InvalidEasySTSettingsException:
        return False

    return len(_ratios) > 0 and all(0.0 <= _ratio <= 1.0 for _ratio in _ratios)

##-------------------start-of-_convert_to_correct_type()-------------------------------------------------------------------------------------------------------------------------------------------------------------------------

_positive_int = {"_type": int, "constraints": lambda x: x >= 1}
_non_negative_int = {"_type": int, "constraints": lambda x: x >= 0}
_probability = {"_type": float, "constraints": lambda x: 0.0 <= x <= 1.0}

_type_expectations = {
    "src_vocab_size": {"_type": int, "constraints": lambda x: x >= 8},
    "tgt_vocab_size": {"_type": int, "constraints": lambda x: x >= 8},
    "min_len": _positive_int,
    "max_len": _positive_int,
    "min_frames_per_token": _positive_int,
    "max_frames_per_token": _positive_int,
    "feature_noise": {"_type": float, "constraints": lambda x: x >= 0.0},
    "feature_dim": _positive_int,
    "train_size": _non_negative_int,
    "dev_size": _non_negative_int,
    "test_size": _non_negative_int,
    "text_only_size": _non_negative_int,
    "d_model": _positive_int,
    "n_heads": _positive_int,
    "d_ffn": _positive_int,
    "n_speech_lower_layers": _positive_int,
    "n_shared_encoder_layers": _positive_int,
    "n_decoder_layers": _positive_int,
    "dropout": {"_type": float, "constraints": lambda x: 0.0 <= x < 1.0},
    "max_positions": _positive_int,
    "scheme": {"_type": str, "constraints": lambda x: x in ALLOWED_SCHEMES},
    "alpha": _probability,
    "lambda": {"_type": float, "constraints": lambda x: x >= 0.0},
    "label_smoothing": {"_type": float, "constraints": lambda x: 0.0 <= x < 1.0},
    "lr": {"_type": float, "constraints": lambda x: x > 0.0},
    "adam_beta1": {"_type": float, "constraints": lambda x: 0.0 <= x < 1.0},
    "adam_beta2": {"_type": float, "constraints": lambda x: 0.0 <= x < 1.0},
    "adam_eps": {"_type": float, "constraints": lambda x: x > 0.0},
    "warmup_steps": _non_negative_int,
    "epochs": _non_negative_int,
    "pretrain_epochs": _non_negative_int,
    "accumulation": _positive_int,
    "keep_last": _positive_int,
    "max_tokens_speech": _positive_int,
    "max_tokens_text": _positive_int,
    "beam_size": _positive_int,
    "average_last": _non_negative_int,
    "eval_max_samples": _non_negative_int,
    "ratios": {"_type": str, "constraints": _valid_ratios},
    "workers": _non_negative_int,
    "analysis_max_samples": _non_negative_int,
    "seed": _non_negative_int
}

def _convert_to_correct_type(setting_name:str, initial_value:typing.Any) -> typing.Any:

    """

    Converts the input to the correct _type based on the setting name and checks its constraint.

    Parameters:
    setting_name (str) : The name of the setting to convert.
    initial_value (str or already typed value) : The initial value to convert.

    Returns:
    (typing.Any) : The converted value, or NOT_GIVEN when the input was NOT_GIVEN.

    """

    if(setting_name not in _type_expectations):
        raise InvalidEasySTSettingsException(f"Unknown setting '{setting_name}'.")

    if(initial_value is NOT_GIVEN or isinstance(initial_value, NotGiven) or initial_value == "NOT_GIVEN"):
        return NOT_GIVEN

    _setting_info = _type_expectations[setting_name]

    try:
        if(_setting_info["_type"] == int):

            ## "8000" and 8000 are fine, "8000.5" is not
            if(isinstance(initial_value, float) and not initial_value.is_integer()):
                raise ValueError
            _converted_value = int(str(initial_value).strip()) if isinstance(initial_value, str) else int(initial_value)

        elif(_setting_info["_type"] == float):
            _converted_value = float(initial_value)

        elif(_setting_info["_type"] == bool):
            _converted_value = _string_to_bool(str(initial_value))

        else:
            _converted_value = _setting_info["_type"](initial_value).strip()

    except (TypeError, ValueError):
        raise InvalidEasySTSettingsException(f"{setting_name} expects {_setting_info['_type'].__name__}, got '{initial_value}'.")

    if("constraints" in _setting_info and not _setting_info["constraints"](_converted_value)):
        raise InvalidEasySTSettingsException(f"{setting_name} out of range: {_converted_value}")

    return _converted_value

##-------------------start-of-_config_digest()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _config_digest(settings:typing.Mapping[str, typing.Any]) -> str:

    """

    Short sha256 of the settings in canonical "key = value" form.

    """

    _canonical = "\n".join(f"{_key} = {settings[_key]}" for _key in sorted(settings))

    return hashlib.sha256(_canonical.encode("utf-8")).hexdigest()[:16]

def _known_settings() -> list[str]:
    return sorted(DEFAULT_EXPERIMENT_SETTINGS)
