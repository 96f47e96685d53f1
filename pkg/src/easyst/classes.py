## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
from dataclasses import dataclass, field
from typing_extensions import override

import typing

## third-party libraries
import numpy as np

## custom modules
from .engine.tensor import Tensor
from .exceptions import InvalidEasySTSettingsException
from .util.constants import ALLOWED_SCHEMES, NUM_SPECIAL_TOKENS, PRETRAINING_TASKS

##-------------------start-of-NotGiven--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

class NotGiven:

    """
    A sentinel singleton class used to distinguish omitted keyword arguments
    from those passed in with the value None (which may have different behavior).

    Used until PEP 0661 is accepted

    The command line uses it for flags that were not passed, so they never override a config file value.
    """

    def __bool__(self) -> typing.Literal[False]:
        return False

    @override
    def __repr__(self) -> str:
        return "NOT_GIVEN"


NOT_GIVEN = NotGiven()

##-------------------start-of-ModelConfig--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:

    """

    Architecture hyperparameters of the dual-encoder, shared-decoder transformer.

    """

    src_vocab_size:int = 40
    tgt_vocab_size:int = 44
    speech_feature_dim:int = 16
    d_model:int = 64
    n_heads:int = 4
    d_ffn:int = 128
    n_speech_lower_layers:int = 2
    n_shared_encoder_layers:int = 2
    n_decoder_layers:int = 2
    dropout:float = 0.1
    max_positions:int = 256

    def __post_init__(self) -> None:

        _counts = {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_ffn": self.d_ffn,
            "n_speech_lower_layers": self.n_speech_lower_layers,
            "n_shared_encoder_layers": self.n_shared_encoder_layers,
            "n_decoder_layers": self.n_decoder_layers,
            "speech_feature_dim": self.speech_feature_dim,
            "max_positions": self.max_positions
        }

        for _name, _value in _counts.items():
            if(_value < 1):
                raise InvalidEasySTSettingsException(f"{_name} must be at least 1, got {_value}.")

        if(self.d_model % self.n_heads != 0):
            raise InvalidEasySTSettingsException(f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads}).")

        if(self.tgt_vocab_size < NUM_SPECIAL_TOKENS or self.src_vocab_size < NUM_SPECIAL_TOKENS):
            raise InvalidEasySTSettingsException(f"Vocabularies must reserve the {NUM_SPECIAL_TOKENS} special tokens.")

        if(not 0.0 <= self.dropout < 1.0):
            raise InvalidEasySTSettingsException(f"dropout must be in [0, 1), got {self.dropout}.")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

##-------------------start-of-LossWeights--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:

    """

    Mixing weights of the joint objective: alpha balances NLL against KD, lambda_ scales CAR.

    """

    alpha:float = 0.8
    lambda_:float = 0.02
    label_smoothing:float = 0.1

    def __post_init__(self) -> None:

        if(not 0.0 <= self.alpha <= 1.0):
            raise InvalidEasySTSettingsException(f"alpha must be in [0, 1], got {self.alpha}.")

        if(self.lambda_ < 0.0):
            raise InvalidEasySTSettingsException(f"lambda must be non-negative, got {self.lambda_}.")

        if(not 0.0 <= self.label_smoothing < 1.0):
            raise InvalidEasySTSettingsException(f"label_smoothing must be in [0, 1), got {self.label_smoothing}.")

##-------------------start-of-LossBreakdown--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class LossBreakdown:

    """

    The terms of the joint objective for one batch. A term that was not computed is None.

    The tensors stay attached to the recording graph, so total can be passed to backward.

    """

    total:Tensor
    nll_st:Tensor | None = None
    nll_mt:Tensor | None = None
    kd:Tensor | None = None
    car:Tensor | None = None
    num_tokens:int = 0

    def as_floats(self) -> dict[str, float | None]:

        """

        Returns:
        (dict) : Every term as a python float, None where the term was not computed.

        """

        return {
            "nll_st": None if self.nll_st is None else self.nll_st.item(),
            "kd": None if self.kd is None else self.kd.item(),
            "car": None if self.car is None else self.car.item(),
            "nll_mt": None if self.nll_mt is None else self.nll_mt.item(),
            "total": self.total.item()
        }

##-------------------start-of-CorpusSpec--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:

    """

    Parameters of the synthetic paired-modality corpus.

    """

    src_vocab_size:int = 40
    tgt_vocab_size:int = 44
    min_len:int = 5
    max_len:int = 20
    min_frames_per_token:int = 2
    max_frames_per_token:int = 4
    feature_noise:float = 0.1
    feature_dim:int = 16
    train_size:int = 8000
    dev_size:int = 500
    test_size:int = 500
    text_only_size:int = 8000
    seed:int = 1

    def __post_init__(self) -> None:

        if(self.src_vocab_size < 8 or self.tgt_vocab_size < 8):
            raise InvalidEasySTSettingsException("Vocabulary sizes must be at least 8.")

        if(not 1 <= self.min_len <= self.max_len):
            raise InvalidEasySTSettingsException(f"Sentence lengths need 1 <= min_len <= max_len, got [{self.min_len}, {self.max_len}].")

        if(not 1 <= self.min_frames_per_token <= self.max_frames_per_token):
            raise InvalidEasySTSettingsException(f"Frame rates need 1 <= min <= max, got [{self.min_frames_per_token}, {self.max_frames_per_token}].")

        if(self.feature_noise < 0.0):
            raise InvalidEasySTSettingsException(f"feature_noise must be non-negative, got {self.feature_noise}.")

        if(self.feature_dim < 1):
            raise InvalidEasySTSettingsException(f"feature_dim must be at least 1, got {self.feature_dim}.")

        if(min(self.train_size, self.dev_size, self.test_size, self.text_only_size) < 0):
            raise InvalidEasySTSettingsException("Dataset sizes must be non-negative.")

##-------------------start-of-TrainingSample--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class TrainingSample:

    """

    One corpus entry. speech is the d_s x N feature matrix, None for text-only samples.

    """

    id:str
    source:list[int]
    target:list[int]
    speech:np.ndarray | None = None

    @property
    def modality(self) -> typing.Literal["speech", "text"]:
        return "text" if self.speech is None else "speech"

    @property
    def num_frames(self) -> int:
        return 0 if self.speech is None else int(self.speech.shape[1])

##-------------------start-of-Batch--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class Batch:

    """

    A padded batch. Token matrices are B x T int arrays padded with PAD_ID, masks are True at real positions.

    tgt_in is the bos-shifted target, tgt_out the target followed by eos.

    """

    ids:list[str]
    src_tokens:np.ndarray
    src_mask:np.ndarray
    tgt_in:np.ndarray
    tgt_out:np.ndarray
    tgt_mask:np.ndarray
    frames:np.ndarray | None = None
    frame_mask:np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def num_target_tokens(self) -> int:
        return int(self.tgt_mask.sum())

    @property
    def has_speech(self) -> bool:
        return self.frames is not None

##-------------------start-of-TrainConfig--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:

    """

    Optimization settings for pretraining and joint fine-tuning.

    """

    scheme:str = "jt-proposed"
    weights:LossWeights = field(default_factory=LossWeights)
    lr:float = 5e-3
    adam_beta1:float = 0.9
    adam_beta2:float = 0.98
    adam_eps:float = 1e-8
    warmup_steps:int = 200
    epochs:int = 40
    accumulation:int = 4
    seed:int = 1
    checkpoint_dir:str | None = None
    keep_last:int = 10
    max_tokens_speech:int = 2000
    max_tokens_text:int = 800

    def __post_init__(self) -> None:

        if(self.scheme not in ALLOWED_SCHEMES + PRETRAINING_TASKS):
            raise InvalidEasySTSettingsException(f"Unknown scheme '{self.scheme}'. Supported schemes are {', '.join(ALLOWED_SCHEMES + PRETRAINING_TASKS)}.")

        if(self.accumulation < 1):
            raise InvalidEasySTSettingsException(f"accumulation must be at least 1, got {self.accumulation}.")

        if(self.epochs < 0):
            raise InvalidEasySTSettingsException(f"epochs must be non-negative, got {self.epochs}.")

        if(self.lr <= 0.0):
            raise InvalidEasySTSettingsException(f"lr must be positive, got {self.lr}.")

        if(self.keep_last < 1):
            raise InvalidEasySTSettingsException(f"keep_last must be at least 1, got {self.keep_last}.")

##-------------------start-of-AdamState--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class AdamState:

    """

    First and second moment buffers per parameter name, plus the update counter.

    """

    step:int = 0
    m:dict[str, np.ndarray] = field(default_factory=dict)
    v:dict[str, np.ndarray] = field(default_factory=dict)

##-------------------start-of-Checkpoint--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class Checkpoint:

    """

    Named float32 tensors plus a metadata dictionary (scheme, step, epoch, config digest, sources).

    """

    tensors:dict[str, np.ndarray]
    metadata:dict[str, typing.Any] = field(default_factory=dict)
    version:int = 1

    def names(self) -> list[str]:
        return sorted(self.tensors)

    @property
    def scheme(self) -> str | None:
        return self.metadata.get("scheme")

##-------------------start-of-Hypothesis--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class Hypothesis:

    """

    A decoded sequence. tokens end with eos when the hypothesis finished.

    """

    tokens:list[int]
    logprob:float
    score:float
    finished:bool = True

##-------------------start-of-ModuleSelector--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class ModuleSelector:

    """

    Selects every checkpoint tensor under a name prefix, e.g. "decoder.1".

    """

    prefix:str

    def matches(self, name:str) -> bool:
        return name == self.prefix or name.startswith(self.prefix + ".")

##-------------------start-of-CriticalityCurve--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class CriticalityCurve:

    """

    BLEU of a model whose selected module is rolled back toward its pretrained values, per interpolation ratio.

    """

    selector:ModuleSelector
    ratios:list[float]
    bleu:list[float]
    bleu_delta:list[float]

##-------------------start-of-CorrelationProfile--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class CorrelationProfile:

    """

    Per decoder layer Pearson correlation between speech-conditioned and text-conditioned hidden states.

    components keeps every layer's per-dimension coefficients, flagged the dimensions whose variance was zero.

    """

    layer_coefficients:list[float]
    components:list[np.ndarray]
    flagged:list[list[int]]
    n_points:int
    label:str = ""

    def audit_components(self, layer:int) -> np.ndarray:

        """

        Returns the layer's coefficients without the flagged (degenerate) dimensions.

        """

        _keep = np.ones(self.components[layer].shape[0], dtype=bool)
        _keep[self.flagged[layer]] = False

        return self.components[layer][_keep]

##-------------------start-of-ForwardTrace--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class ForwardTrace:

    """

    What a forward pass exposes: encoder outputs as d_h x N, per decoder layer states as K x d_h, and K x |V| logits.

    """

    encoder_output:Tensor | None = None
    decoder_states:list[Tensor] = field(default_factory=list)
    logits:Tensor | None = None

##-------------------start-of-TrainingRun--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class TrainingRun:

    """

    What a training call leaves behind: the final in-memory checkpoint, saved checkpoint paths, metrics rows and per-epoch dev history.

    """

    checkpoint:Checkpoint
    checkpoints:list[str] = field(default_factory=list)
    metrics:list[dict[str, typing.Any]] = field(default_factory=list)
    history:list[dict[str, float]] = field(default_factory=list)
    steps:int = 0

##-------------------start-of-AblationRow--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

@dataclass
class AblationRow:

    """

    One system of the ablation ladder, scored once per seed. mt_bleu stays empty for systems without a text path.

    """

    system:str
    scheme:str
    alpha:float
    lambda_:float
    seeds:list[int] = field(default_factory=list)
    st_bleu:list[float] = field(default_factory=list)
    mt_bleu:list[float] = field(default_factory=list)

    @property
    def st_mean(self) -> float:
        return float(np.mean(self.st_bleu)) if self.st_bleu else 0.0

    @property
    def mt_mean(self) -> float | None:
        return float(np.mean(self.mt_bleu)) if self.mt_bleu else None
