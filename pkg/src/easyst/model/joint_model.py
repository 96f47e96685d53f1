## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import math
import typing

## third-party libraries
import numpy as np

## custom modules
from . import layers
from ..classes import ForwardTrace, ModelConfig
from ..engine import ops
from ..engine.tensor import Tensor
from ..exceptions import ContractError, InvalidEasySTSettingsException, LengthError, VocabularyError
from ..util.constants import BOS_ID, SCHEME_LAYOUTS

##-------------------start-of-JointModel--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class JointModel:

    """

    Dual-encoder, shared-decoder transformer.

    The layout (a scheme name, or "asr"/"mt" for the single-task models) decides which paths exist:

    speech: speech_frontend -> speech_encoder.* -> shared_encoder.* -> shared_encoder.norm
    text (shared): text_embedding -> shared_encoder.* -> shared_encoder.norm
    text (own stack): text_embedding -> text_encoder.* -> text_encoder.norm

    Both paths feed the same decoder.* and output_projection tensors. Every parameter lives once in
    self.parameters, so a shared tensor is the same object whichever path reads it.

    Passing a numpy Generator as rng runs in training mode (dropout on), None runs in eval mode.

    """

    def __init__(self, config:ModelConfig, layout:str, parameters:dict[str, Tensor] | None = None, seed:int = 0) -> None:

        """

        Parameters:
        config (ModelConfig) : The architecture.
        layout (string) : A scheme name, or "asr"/"mt".
        parameters (dict or None) : Existing parameters, freshly initialized from seed when None.
        seed (int) : The initialization seed.

        """

        if(layout not in SCHEME_LAYOUTS):
            raise InvalidEasySTSettingsException(f"Unknown model layout '{layout}'. Supported layouts are {', '.join(SCHEME_LAYOUTS)}.")

        self.config = config
        self.layout = layout

        _paths = SCHEME_LAYOUTS[layout]

        self.has_speech:bool = _paths["speech"]
        self.has_text:bool = _paths["text"]
        self.shares_encoder:bool = _paths["share_encoder"]

        ## the transcription model predicts source tokens
        self.output_vocab_size = config.src_vocab_size if layout == "asr" else config.tgt_vocab_size

        self.parameters:dict[str, Tensor] = self._initialize(np.random.default_rng(seed))

        if(parameters is not None):
            self.load_parameters(parameters)

    ##-------------------start-of-_initialize()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    def _initialize(self, rng:np.random.Generator) -> dict[str, Tensor]:

        _config = self.config
        _width = _config.d_model
        _params:dict[str, Tensor] = {}

        if(self.has_speech):
            layers.add_linear(_params, "speech_frontend.proj", _config.speech_feature_dim, _width, rng)

            for _index in range(_config.n_speech_lower_layers):
                layers.add_encoder_layer(_params, f"speech_encoder.{_index}", _width, _config.d_ffn, rng)

        if(self.has_speech or self.shares_encoder):
            for _index in range(_config.n_shared_encoder_layers):
                layers.add_encoder_layer(_params, f"shared_encoder.{_index}", _width, _config.d_ffn, rng)

            layers.add_norm(_params, "shared_encoder.norm", _width)

        if(self.has_text):
            layers.add_embedding(_params, "text_embedding.weight", _config.src_vocab_size, _width, rng)

            if(not self.shares_encoder):
                for _index in range(_config.n_shared_encoder_layers):
                    layers.add_encoder_layer(_params, f"text_encoder.{_index}", _width, _config.d_ffn, rng)

                layers.add_norm(_params, "text_encoder.norm", _width)

        layers.add_embedding(_params, "decoder.embed.weight", self.output_vocab_size, _width, rng)

        for _index in range(_config.n_decoder_layers):
            layers.add_decoder_layer(_params, f"decoder.{_index}", _width, _config.d_ffn, rng)

        layers.add_norm(_params, "decoder.norm", _width)
        layers.add_linear(_params, "output_projection", _width, self.output_vocab_size, rng)

        return _params

    ##-------------------start-of-parameter-access--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    def parameter_names(self) -> list[str]:
        return sorted(self.parameters)

    def load_parameters(self, values:typing.Mapping[str, typing.Any]) -> None:

        """

        Overwrites parameter values in place. Names and shapes must match this layout exactly.

        """

        _missing = sorted(set(self.parameters) - set(values))
        _extra = sorted(set(values) - set(self.parameters))

        if(_missing or _extra):
            raise ContractError(f"Parameter names do not match layout '{self.layout}': missing {_missing[:3]}, unexpected {_extra[:3]}.")

        for _name, _value in values.items():
            _array = np.asarray(_value.data if isinstance(_value, Tensor) else _value, dtype=np.float64)

            if(_array.shape != self.parameters[_name].shape):
                raise ContractError(f"Shape mismatch for {_name}: {_array.shape} vs {self.parameters[_name].shape}.")

            self.parameters[_name].data = _array.copy()

    def state(self) -> dict[str, np.ndarray]:
        return {_name: self.parameters[_name].data for _name in self.parameter_names()}

    def zero_grad(self) -> None:

        for _param in self.parameters.values():
            _param.zero_grad()

    def clone(self) -> "JointModel":

        """

        A frozen copy with its own storage, safe to evaluate from another thread.

        """

        return JointModel(self.config, self.layout, parameters=self.state())

    def num_parameters(self) -> int:
        return sum(_param.size for _param in self.parameters.values())

    ##-------------------start-of-_check_tokens()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _check_tokens(tokens:np.ndarray, vocab_size:int, side:str) -> None:

        if(tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size)):
            _bad = int(tokens[(tokens < 0) | (tokens >= vocab_size)][0])
            raise VocabularyError(f"{side} token id {_bad} is outside the vocabulary of size {vocab_size}.")

    def _check_length(self, length:int, what:str) -> None:

        if(length > self.config.max_positions):
            raise LengthError(f"{what} length {length} exceeds max_positions ({self.config.max_positions}).")

    ##-------------------start-of-encoders--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    def _run_stack(self, x:Tensor, mask:np.ndarray, prefixes:list[str], norm_prefix:str, rng:np.random.Generator | None) -> Tensor:

        _bias = layers.key_padding_bias(mask)

        for _prefix in prefixes:
            x = layers.encoder_layer(self.parameters, _prefix, x, _bias, self.config.n_heads, self.config.dropout, rng)

        return layers.layer_norm(self.parameters, norm_prefix, x)

    def _encode_speech_batch(self, frames:np.ndarray, frame_mask:np.ndarray, rng:np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:

        """

        Parameters:
        frames (np.ndarray) : B x N x d_s features.
        frame_mask (np.ndarray) : B x N, True at real frames.
        rng (Generator or None) : Dropout generator, None in eval mode.

        Returns:
        (Tensor) : B x ceil(N/2) x d encoder output.
        (np.ndarray) : Its mask.

        """

        if(not self.has_speech):
            raise ContractError(f"Layout '{self.layout}' has no speech path.")

        self._check_length(frames.shape[1], "Speech input")

        _features, _mask = layers.subsample_frames(frames, frame_mask)

        _config = self.config
        _x = layers.linear(Tensor(_features), self.parameters["speech_frontend.proj.weight"], self.parameters["speech_frontend.proj.bias"])
        _x = ops.add(_x, layers.sinusoidal_positions(_features.shape[1], _config.d_model))
        _x = ops.dropout(_x, _config.dropout, rng)

        _prefixes = [f"speech_encoder.{_index}" for _index in range(_config.n_speech_lower_layers)]
        _prefixes += [f"shared_encoder.{_index}" for _index in range(_config.n_shared_encoder_layers)]

        return self._run_stack(_x, _mask, _prefixes, "shared_encoder.norm", rng), _mask

    def _encode_text_batch(self, tokens:np.ndarray, mask:np.ndarray, rng:np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:

        """

        B x M source ids -> B x M x d encoder output and the mask.

        """

        if(not self.has_text):
            raise ContractError(f"Layout '{self.layout}' has no text path.")

        self._check_length(tokens.shape[1], "Source")
        self._check_tokens(tokens, self.config.src_vocab_size, "Source")

        _config = self.config
        _x = ops.scale(ops.gather(self.parameters["text_embedding.weight"], tokens), math.sqrt(_config.d_model))
        _x = ops.add(_x, layers.sinusoidal_positions(tokens.shape[1], _config.d_model))
        _x = ops.dropout(_x, _config.dropout, rng)

        _stack = "shared_encoder" if self.shares_encoder else "text_encoder"
        _prefixes = [f"{_stack}.{_index}" for _index in range(_config.n_shared_encoder_layers)]

        return self._run_stack(_x, mask, _prefixes, f"{_stack}.norm", rng), mask

    ##-------------------start-of-_decode_batch()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    def _decode_batch(self,
                      memory:Tensor,
                      memory_mask:np.ndarray,
                      tgt_in:np.ndarray,
                      rng:np.random.Generator | None = None,
                      collect_states:bool = False) -> tuple[Tensor, list[Tensor]]:

        """

        Teacher-forced decoder pass under a causal mask.

        Parameters:
        memory (Tensor) : B x N x d encoder output.
        memory_mask (np.ndarray) : B x N.
        tgt_in (np.ndarray) : B x K decoder input ids (bos-shifted targets).
        rng (Generator or None) : Dropout generator.
        collect_states (bool) : Whether to return every layer's output states.

        Returns:
        (Tensor) : B x K x |V| logits.
        (list) : Per decoder layer B x K x d states, empty unless collect_states. The top layer's entry is taken after the final norm.

        """

        _config = self.config
        _length = tgt_in.shape[1]

        self._check_length(_length, "Target")
        self._check_tokens(tgt_in, self.output_vocab_size, "Target")

        _x = ops.scale(ops.gather(self.parameters["decoder.embed.weight"], tgt_in), math.sqrt(_config.d_model))
        _x = ops.add(_x, layers.sinusoidal_positions(_length, _config.d_model))
        _x = ops.dropout(_x, _config.dropout, rng)

        _self_bias = layers.causal_bias(_length)
        _memory_bias = layers.key_padding_bias(memory_mask)

        _states:list[Tensor] = []

        for _index in range(_config.n_decoder_layers):
            _x = layers.decoder_layer(self.parameters, f"decoder.{_index}", _x, memory, _self_bias, _memory_bias, _config.n_heads, _config.dropout, rng)
            _states.append(_x)

        _x = layers.layer_norm(self.parameters, "decoder.norm", _x)

        _states[-1] = _x

        _logits = layers.linear(_x, self.parameters["output_projection.weight"], self.parameters["output_projection.bias"])

        return _logits, (_states if collect_states else [])

    ##-------------------start-of-encode_speech()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    def encode_speech(self, features:np.ndarray, rng:np.random.Generator | None = None) -> ForwardTrace:

        """

        Encodes one d_s x N feature matrix.

        Returns:
        (ForwardTrace) : encoder_output is d x ceil(N/2), the length after frame subsampling.

        """

        features = np.asarray(features, dtype=np.float64)

        if(features.ndim != 2 or features.shape[1] < 1):
            raise ContractError(f"Speech features must be a non-empty d_s x N matrix, got shape {features.shape}.")

        _memory, _ = self._encode_speech_batch(features.T[None], np.ones((1, features.shape[1]), dtype=bool), rng)

        return ForwardTrace(encoder_output=ops.transpose(ops.getitem(_memory, 0)))

    def encode_text(self, tokens:typing.Sequence[int], rng:np.random.Generator | None = None) -> ForwardTrace:

        """

        Encodes one source token sequence into a d x M encoder output.

        """

        _tokens = np.asarray(tokens, dtype=np.int64)[None]

        if(_tokens.shape[1] < 1):
            raise ContractError("Source sequence must hold at least one token.")

        _memory, _ = self._encode_text_batch(_tokens, np.ones(_tokens.shape, dtype=bool), rng)

        return ForwardTrace(encoder_output=ops.transpose(ops.getitem(_memory, 0)))

    def decode(self, encoder_output:Tensor, targets:typing.Sequence[int], rng:np.random.Generator | None = None) -> ForwardTrace:

        """

        Teacher-forced decode of one sequence. The decoder reads [bos] + targets[:-1], so logits[k] scores targets[k].

        Parameters:
        encoder_output (Tensor) : d x N, as returned by encode_speech or encode_text.
        targets (sequence of int) : K target ids.

        Returns:
        (ForwardTrace) : K x |V| logits and per layer K x d states.

        """

        _targets = [int(_token) for _token in targets]

        if(len(_targets) < 1):
            raise ContractError("decode needs at least one target position.")

        _memory = ops.reshape(ops.transpose(encoder_output), (1, encoder_output.shape[1], encoder_output.shape[0]))
        _tgt_in = np.asarray([[BOS_ID] + _targets[:-1]], dtype=np.int64)

        self._check_tokens(np.asarray(_targets, dtype=np.int64), self.output_vocab_size, "Target")

        _logits, _states = self._decode_batch(_memory, np.ones((1, encoder_output.shape[1]), dtype=bool), _tgt_in, rng, collect_states=True)

        return ForwardTrace(encoder_output=encoder_output,
                            decoder_states=[ops.getitem(_state, 0) for _state in _states],
                            logits=ops.getitem(_logits, 0))
