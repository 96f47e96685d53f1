## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import asyncio
import logging
import os
import typing

## custom modules
from .classes import AblationRow, Checkpoint, CorrelationProfile, CriticalityCurve, ModuleSelector, TrainingRun, TrainingSample

from .model.joint_model import JointModel
from .model.schemes import from_checkpoint

from .services.analysis_service import AnalysisService
from .services.data_service import DataService
from .services.evaluation_service import EvaluationService
from .services.report_service import ReportService
from .services.trainer_service import TrainerService

from .exceptions import InvalidEasySTSettingsException
from .util.checkpoint_util import average_checkpoints, list_checkpoints, load_checkpoint, save_checkpoint
from .util.config_util import corpus_spec_from, model_config_from, ratios_from, train_config_from
from .util.constants import ABLATION_LADDER, ABLATION_ST_ROW
from .util.util import _config_digest

class EasyST:

    """

    EasyST global client, binds corpus generation, training, evaluation and analysis into experiment pipelines.

    Use set_log_directory() to have every service audit its calls into easyst-log.txt. (Optional)

    Use generate_corpus(), pretrain() and train() to build models, evaluate() to score them, and criticality() / correlation() to analyse them.

    Every pipeline takes a settings mapping, usually from util.config_util.resolve_settings().

    See the documentation for each function for more information.

    """

##-------------------start-of-set_log_directory()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def set_log_directory(log_directory:str | None, settings:typing.Mapping[str, typing.Any] | None = None) -> None:

        """

        Sets the audit directory of every service. None turns auditing off.

        Parameters:
        log_directory (string or None) : Where easyst-log.txt goes.
        settings (mapping or None) : Resolved settings; supplies the config digest stamped into checkpoints and the worker count.

        """

        _workers = (settings or {}).get("workers") or os.cpu_count() or 1
        _beam = (settings or {}).get("beam_size", 5)

        DataService._set_attributes(log_directory)
        TrainerService._set_attributes(log_directory, _config_digest(settings) if settings is not None else None)
        EvaluationService._set_attributes(log_directory, _workers)
        AnalysisService._set_attributes(log_directory, _workers, _beam)
        ReportService._set_attributes(log_directory)

##-------------------start-of-generate_corpus()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def generate_corpus(settings:typing.Mapping[str, typing.Any], out_dir:str | None = None) -> dict[str, list[TrainingSample]]:

        """

        Generates the synthetic corpus described by settings, writing it to out_dir when given.

        """

        _corpus = DataService.generate_corpus(corpus_spec_from(settings))

        if(out_dir is not None):
            DataService.write_corpus(_corpus, out_dir)

        return _corpus

    @staticmethod
    def load_corpus(settings:typing.Mapping[str, typing.Any], data_dir:str | None = None) -> dict[str, list[TrainingSample]]:

        """

        Reads a corpus written by generate_corpus, or regenerates it in memory when data_dir is None.

        """

        if(data_dir is None):
            return EasyST.generate_corpus(settings)

        return DataService.read_corpus(data_dir, settings["feature_dim"])

##-------------------start-of-pretrain()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def pretrain(task:typing.Literal["asr", "mt"],
                 settings:typing.Mapping[str, typing.Any],
                 corpus:typing.Mapping[str, typing.Sequence[TrainingSample]],
                 run_dir:str | None = None,
                 **changes:typing.Any) -> TrainingRun:

        """

        Pretrains the ASR-analog or the MT model for settings["pretrain_epochs"] epochs.

        Parameters:
        task (literal["asr", "mt"]) : Which model.
        settings (mapping) : Resolved settings.
        corpus (mapping) : Split name -> samples.
        run_dir (string or None) : Receives metrics.csv and checkpoints/.
        **changes : TrainConfig field overrides, e.g. seed.

        Returns:
        (TrainingRun) : The pretraining result.

        """

        _checkpoint_dir = os.path.join(run_dir, "checkpoints") if run_dir is not None else None
        _config = train_config_from(settings, _checkpoint_dir, **{"scheme": task, "epochs": settings["pretrain_epochs"], **changes})

        return TrainerService.pretrain(task, _config, model_config_from(settings), corpus, run_dir)

##-------------------start-of-train()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def train(settings:typing.Mapping[str, typing.Any],
              corpus:typing.Mapping[str, typing.Sequence[TrainingSample]],
              asr_checkpoint:Checkpoint | None,
              mt_checkpoint:Checkpoint | None,
              run_dir:str | None = None,
              **changes:typing.Any) -> TrainingRun:

        """

        Joint fine-tuning under settings["scheme"], initialized from the pretrained checkpoints.

        Parameters:
        settings (mapping) : Resolved settings.
        corpus (mapping) : Split name -> samples.
        asr_checkpoint, mt_checkpoint (Checkpoint or None) : What the scheme requires.
        run_dir (string or None) : Receives metrics.csv and checkpoints/.
        **changes : TrainConfig field overrides, e.g. scheme, weights or seed.

        Returns:
        (TrainingRun) : The training result.

        """

        _checkpoint_dir = os.path.join(run_dir, "checkpoints") if run_dir is not None else None
        _config = train_config_from(settings, _checkpoint_dir, **changes)

        return TrainerService.train_joint(_config, model_config_from(settings), corpus, asr_checkpoint, mt_checkpoint, run_dir)

##-------------------start-of-load_model()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def load_averaged(checkpoints:typing.Sequence[str], average_last:int | None = None) -> Checkpoint:

        """

        Loads one checkpoint, or averages several.

        Parameters:
        checkpoints (sequence of string) : Checkpoint files or directories holding them.
        average_last (int or None) : Keep only the newest k files before averaging.

        Returns:
        (Checkpoint) : The single or averaged checkpoint.

        """

        _paths = []

        for _path in checkpoints:
            _paths.extend(list_checkpoints(_path) if os.path.isdir(_path) else [_path])

        if(not _paths):
            raise InvalidEasySTSettingsException(f"No checkpoints found in {', '.join(checkpoints)}.")

        if(average_last is not None and average_last > 0):
            _paths = _paths[-average_last:]

        if(len(_paths) == 1):
            return load_checkpoint(_paths[0])

        logging.info(f"Averaging {len(_paths)} checkpoints.")

        return average_checkpoints(_paths)

    @staticmethod
    def load_model(checkpoints:typing.Sequence[str], average_last:int | None = None) -> JointModel:
        return from_checkpoint(EasyST.load_averaged(checkpoints, average_last))

##-------------------start-of-evaluate()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def evaluate(model:JointModel,
                 samples:typing.Sequence[TrainingSample],
                 task:typing.Literal["st", "mt"] = "st",
                 beam_size:int = 5,
                 max_samples:int = 0) -> tuple[float, list[str], list[list[int]]]:

        """

        Beam-search decodes samples and scores them.

        Parameters:
        model (JointModel) : The model.
        samples (sequence of TrainingSample) : Usually the test split.
        task (literal["st", "mt"]) : "st" decodes speech, "mt" the co-trained text branch.
        beam_size (int) : Beam width.
        max_samples (int) : Evaluate only the first max_samples; 0 means all.

        Returns:
        (float) : Corpus BLEU.
        (list of string) : Sample ids.
        (list of list of int) : Hypotheses without special tokens.

        """

        if(task == "mt" and not model.has_text):
            raise InvalidEasySTSettingsException(f"Layout '{model.layout}' has no text branch to evaluate.")

        if(task == "st" and not model.has_speech):
            raise InvalidEasySTSettingsException(f"Layout '{model.layout}' has no speech branch to evaluate.")

        _samples = list(samples)[:max_samples] if max_samples > 0 else list(samples)

        _bleu, _hypotheses = EvaluationService.evaluate(model, _samples, "speech" if task == "st" else "text", beam_size)

        return _bleu, [_sample.id for _sample in _samples], [EvaluationService.strip_special(_hypothesis.tokens) for _hypothesis in _hypotheses]

##-------------------start-of-criticality()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def criticality(trained:Checkpoint,
                    asr_checkpoint:Checkpoint | None,
                    mt_checkpoint:Checkpoint | None,
                    dev_set:typing.Sequence[TrainingSample],
                    settings:typing.Mapping[str, typing.Any],
                    selectors:typing.Sequence[str] | None = None) -> list[CriticalityCurve]:

        """

        Criticality curves for the trained checkpoint, each module rolled back toward the pretrained model its scheme initialized it from.

        Parameters:
        trained (Checkpoint) : The fine-tuned model.
        asr_checkpoint, mt_checkpoint (Checkpoint or None) : The pretrained models.
        dev_set (sequence of TrainingSample) : Decoded at each point, capped at settings["analysis_max_samples"].
        settings (mapping) : Resolved settings; ratios and workers come from here.
        selectors (sequence of string or None) : Module prefixes; defaults to every encoder and decoder layer.

        Returns:
        (list of CriticalityCurve) : Ordered bottom layer first.

        """

        _rollback = AnalysisService.rollback_map(trained, asr_checkpoint, mt_checkpoint)
        if(selectors):
            _selectors = [ModuleSelector(_prefix) for _prefix in selectors]
        else:
            _selectors = [_selector for _selector in AnalysisService.default_selectors(trained) if any(ModuleSelector(_prefix).matches(_selector.prefix) for _prefix in _rollback)]

        _cap = settings["analysis_max_samples"]
        _dev = list(dev_set)[:_cap] if _cap > 0 else list(dev_set)

        _modality = "text" if trained.scheme == "mt" else "speech"

        if(settings["workers"] == 1):
            return AnalysisService.criticality_sweep(trained, _rollback, _selectors, ratios_from(settings), _dev, _modality)

        return asyncio.run(AnalysisService.criticality_sweep_async(trained, _rollback, _selectors, ratios_from(settings), _dev, _modality))

##-------------------start-of-correlation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def correlation(models:typing.Mapping[str, JointModel], paired_dev:typing.Sequence[TrainingSample], max_samples:int = 0) -> list[CorrelationProfile]:

        """

        One correlation profile per labelled model, all on the same samples.

        """

        _samples = list(paired_dev)[:max_samples] if max_samples > 0 else list(paired_dev)

        return [AnalysisService.modality_correlation(_model, _samples, _label) for _label, _model in models.items()]

##-------------------start-of-report()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def report(result:typing.Any, out_dir:str, name:str | None = None) -> list[str]:
        return ReportService.emit_report(result, out_dir, name)

##-------------------start-of-ablation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def ablation(settings:typing.Mapping[str, typing.Any],
                 corpus:typing.Mapping[str, typing.Sequence[TrainingSample]],
                 run_dir:str,
                 seeds:typing.Sequence[int] | None = None,
                 include_st:bool = False,
                 asr_checkpoint:Checkpoint | None = None,
                 mt_checkpoint:Checkpoint | None = None) -> list[AblationRow]:

        """

        Runs the ablation ladder JT -> JT-S-MT -> + CAR -> + CAR + KD (optionally led by ST) once per seed and scores each system on the test split.

        Parameters:
        settings (mapping) : Resolved settings.
        corpus (mapping) : Split name -> samples.
        run_dir (string) : Every system trains in run_dir/seed-<s>/<scheme slug>.
        seeds (sequence of int or None) : Defaults to [settings["seed"]].
        include_st (bool) : Whether to add the single-task ST row first.
        asr_checkpoint, mt_checkpoint (Checkpoint or None) : Pretrained models; pretrained per seed inside run_dir when missing.

        Returns:
        (list of AblationRow) : One row per system in ladder order.

        """

        _ladder = ([ABLATION_ST_ROW] if include_st else []) + list(ABLATION_LADDER)
        _rows = [AblationRow(system=_system, scheme=_scheme, alpha=_alpha, lambda_=_lambda) for _system, _scheme, _alpha, _lambda in _ladder]
        _seeds = list(seeds) if seeds else [settings["seed"]]

        for _seed in _seeds:

            _seed_dir = os.path.join(run_dir, f"seed-{_seed}")

            _asr = asr_checkpoint
            _mt = mt_checkpoint

            if(_asr is None):
                _asr = EasyST.pretrain("asr", settings, corpus, os.path.join(_seed_dir, "pretrain-asr"), seed=_seed).checkpoint
                save_checkpoint(_asr, os.path.join(_seed_dir, "pretrain-asr", "final.bmtc"))

            if(_mt is None):
                _mt = EasyST.pretrain("mt", settings, corpus, os.path.join(_seed_dir, "pretrain-mt"), seed=_seed).checkpoint
                save_checkpoint(_mt, os.path.join(_seed_dir, "pretrain-mt", "final.bmtc"))

            for _index, _row in enumerate(_rows):

                _system_dir = os.path.join(_seed_dir, f"{_index}-{_row.scheme}-a{_row.alpha}-l{_row.lambda_}")

                _weights = train_config_from(settings).weights
                _run = EasyST.train(settings,
                                    corpus,
                                    _asr,
                                    _mt,
                                    _system_dir,
                                    scheme=_row.scheme,
                                    seed=_seed,
                                    weights=type(_weights)(alpha=_row.alpha, lambda_=_row.lambda_, label_smoothing=_weights.label_smoothing))

                _model = from_checkpoint(average_checkpoints(_run.checkpoints[-settings["average_last"]:])) if _run.checkpoints else from_checkpoint(_run.checkpoint)

                _st_bleu, _, _ = EasyST.evaluate(_model, corpus["test"], "st", settings["beam_size"], settings["eval_max_samples"])

                _row.seeds.append(_seed)
                _row.st_bleu.append(_st_bleu)

                if(_model.has_text):
                    _mt_bleu, _, _ = EasyST.evaluate(_model, corpus["test"], "mt", settings["beam_size"], settings["eval_max_samples"])
                    _row.mt_bleu.append(_mt_bleu)

                logging.info(f"ablation seed {_seed} {_row.system}: ST BLEU {_st_bleu:.2f}")

        return _rows
