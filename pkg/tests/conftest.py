## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import typing

## third-party libraries
import pytest

## custom modules
from easyst.classes import CorpusSpec, ModelConfig
from easyst.engine.gradcheck import grad_check
from easyst.engine.tensor import Tensor
from easyst.model.joint_model import JointModel
from easyst.services.data_service import DataService

##-------------------start-of-configs()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

TINY_MODEL = dict(src_vocab_size=12,
                  tgt_vocab_size=14,
                  speech_feature_dim=4,
                  d_model=8,
                  n_heads=2,
                  d_ffn=16,
                  n_speech_lower_layers=1,
                  n_shared_encoder_layers=1,
                  n_decoder_layers=2,
                  dropout=0.1,
                  max_positions=64)

TINY_CORPUS = dict(src_vocab_size=12,
                   tgt_vocab_size=14,
                   min_len=2,
                   max_len=5,
                   min_frames_per_token=1,
                   max_frames_per_token=2,
                   feature_noise=0.1,
                   feature_dim=4,
                   train_size=24,
                   dev_size=6,
                   test_size=6,
                   text_only_size=24,
                   seed=3)

## the same tiny setup as settings overrides, for the facade and the command line
TINY_SETTINGS = {
    "src_vocab_size": 12, "tgt_vocab_size": 14, "min_len": 2, "max_len": 5,
    "min_frames_per_token": 1, "max_frames_per_token": 2, "feature_dim": 4,
    "train_size": 24, "dev_size": 6, "test_size": 6, "text_only_size": 24,
    "d_model": 8, "n_heads": 2, "d_ffn": 16, "n_speech_lower_layers": 1, "n_shared_encoder_layers": 1, "n_decoder_layers": 2,
    "epochs": 1, "pretrain_epochs": 1, "accumulation": 2, "warmup_steps": 4, "keep_last": 3, "average_last": 2,
    "max_tokens_speech": 40, "max_tokens_text": 20, "beam_size": 2, "workers": 1, "analysis_max_samples": 6
}

@pytest.fixture
def model_config() -> ModelConfig:
    return ModelConfig(**TINY_MODEL)

@pytest.fixture
def corpus_spec() -> CorpusSpec:
    return CorpusSpec(**TINY_CORPUS)

@pytest.fixture(scope="session")
def corpus() -> dict:
    return DataService.generate_corpus(CorpusSpec(**TINY_CORPUS))

@pytest.fixture(scope="session")
def long_dev_corpus() -> dict:
    return DataService.generate_corpus(CorpusSpec(**{**TINY_CORPUS, "dev_size": 100}))

##-------------------start-of-parameter_check()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def parameter_check(model:JointModel, name:str, loss:typing.Callable[[], Tensor], eps:float = 1e-5) -> float:

    """

    grad_check of a loss with respect to one model parameter, restoring the parameter afterwards.

    Parameters:
    model (JointModel) : The model the loss reads.
    name (string) : Parameter to perturb.
    loss (callable) : Recomputes the scalar loss from the model's current parameters.

    Returns:
    (float) : The max relative error reported by grad_check.

    """

    _original = model.parameters[name]

    def _loss(x:Tensor) -> Tensor:
        model.parameters[name] = x
        return loss()

    try:
        return grad_check(_loss, _original.data.copy(), eps=eps)

    finally:
        model.parameters[name] = _original
