## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

from .version import VERSION as __version__  # noqa

__author__ = "Kaden Bilyeu (Bikatr7) <Bikatr7@proton.me>"

from .easyst import EasyST

from .classes import ModelConfig, LossWeights, LossBreakdown, CorpusSpec, TrainConfig
from .classes import TrainingSample, Batch, Checkpoint, Hypothesis, TrainingRun
from .classes import ModuleSelector, CriticalityCurve, CorrelationProfile, AblationRow, ForwardTrace
from .classes import NOT_GIVEN, NotGiven

from .engine import Tensor, Graph, grad_check
from .model import JointModel, init_from_scheme, tied_parameters, to_checkpoint, from_checkpoint
from .losses import similarity_matrix, reconstruct, car_loss, nll_loss, kd_loss, total_loss

from .services.data_service import DataService
from .services.trainer_service import TrainerService
from .services.evaluation_service import EvaluationService
from .services.analysis_service import AnalysisService
from .services.report_service import ReportService

from .util.checkpoint_util import save_checkpoint, load_checkpoint, average_checkpoints
from .util.constants import ALLOWED_SCHEMES, SCHEME_LAYOUTS, SCHEME_INIT_RULES, DEFAULT_EXPERIMENT_SETTINGS

## base exception
from .exceptions import EasySTException

## error vocabulary
from .exceptions import InvalidEasySTSettingsException, DimensionError, VocabularyError, LengthError, ContractError, GraphError
from .exceptions import InitializationError, CheckpointFormatError, AveragingError, AnalysisError, DivergenceError, ReportIOError

__all__ = [
    "EasyST",
    "ModelConfig", "LossWeights", "LossBreakdown", "CorpusSpec", "TrainConfig",
    "TrainingSample", "Batch", "Checkpoint", "Hypothesis", "TrainingRun",
    "ModuleSelector", "CriticalityCurve", "CorrelationProfile", "AblationRow", "ForwardTrace",
    "NOT_GIVEN", "NotGiven",
    "Tensor", "Graph", "grad_check",
    "JointModel", "init_from_scheme", "tied_parameters", "to_checkpoint", "from_checkpoint",
    "similarity_matrix", "reconstruct", "car_loss", "nll_loss", "kd_loss", "total_loss",
    "DataService", "TrainerService", "EvaluationService", "AnalysisService", "ReportService",
    "save_checkpoint", "load_checkpoint", "average_checkpoints",
    "ALLOWED_SCHEMES", "SCHEME_LAYOUTS", "SCHEME_INIT_RULES", "DEFAULT_EXPERIMENT_SETTINGS",
    "EasySTException",
    "InvalidEasySTSettingsException", "DimensionError", "VocabularyError", "LengthError", "ContractError", "GraphError",
    "InitializationError", "CheckpointFormatError", "AveragingError", "AnalysisError", "DivergenceError", "ReportIOError"
]
