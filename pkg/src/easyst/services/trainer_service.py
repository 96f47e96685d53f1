## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import csv
import logging
import math
import os
import typing

## third-party libraries
import numpy as np

## custom modules
from .data_service import DataService
from ..classes import AdamState, Batch, Checkpoint, LossBreakdown, ModelConfig, TrainConfig, TrainingRun, TrainingSample
from ..decorators import _sync_logging_decorator
from ..engine.tensor import Graph, Tensor
from ..exceptions import DivergenceError, InvalidEasySTSettingsException
from ..losses import _nll_sum, single_task_loss, text_loss, total_loss
from ..model.joint_model import JointModel
from ..model.schemes import init_from_scheme, to_checkpoint
from ..util.checkpoint_util import prune_checkpoints, save_checkpoint
from ..util.constants import CHECKPOINT_SUFFIX, METRICS_COLUMNS, PRETRAINING_TASKS

class TrainerService:

    """

    Single-task pretraining and joint fine-tuning with Adam, gradient accumulation and per-epoch checkpoints.

    """

    _log_directory:str | None = None

    _config_digest:str | None = None

##-------------------start-of-set_attributes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _set_attributes(log_directory:str | None = None, config_digest:str | None = None) -> None:

        TrainerService._log_directory = log_directory
        TrainerService._config_digest = config_digest

##-------------------start-of-learning_rate()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def learning_rate(step:int, base_lr:float, warmup_steps:int) -> float:

        """

        Linear warmup to base_lr over warmup_steps, then inverse square root decay. step counts from 1.

        """

        step = max(step, 1)

        if(warmup_steps <= 0):
            return base_lr / math.sqrt(step)

        return base_lr * min(step / warmup_steps, math.sqrt(warmup_steps / step))

##-------------------start-of-adam_step()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def adam_step(params:typing.Mapping[str, Tensor],
                  grads:typing.Mapping[str, np.ndarray],
                  state:AdamState,
                  lr_t:float,
                  beta1:float = 0.9,
                  beta2:float = 0.98,
                  eps:float = 1e-8) -> AdamState:

        """

        One bias-corrected Adam update, in place on the parameter data.

        Parameters:
        params (mapping) : Name -> parameter tensor.
        grads (mapping) : Name -> gradient, same shapes. Names without a gradient were not in this window's graph and are skipped, moments and values unchanged.
        state (AdamState) : Moment buffers, created as zeros on first use.
        lr_t (float) : This step's learning rate.

        Returns:
        (AdamState) : The same state object, advanced by one step.

        """

        state.step += 1

        _correction1 = 1.0 - beta1 ** state.step
        _correction2 = 1.0 - beta2 ** state.step

        for _name, _param in params.items():

            _grad = grads.get(_name)

            if(_grad is None):
                continue

            if(_name not in state.m):
                state.m[_name] = np.zeros_like(_param.data)
                state.v[_name] = np.zeros_like(_param.data)

            state.m[_name] = beta1 * state.m[_name] + (1.0 - beta1) * _grad
            state.v[_name] = beta2 * state.v[_name] + (1.0 - beta2) * (_grad * _grad)

            _m_hat = state.m[_name] / _correction1
            _v_hat = state.v[_name] / _correction2

            _param.data = _param.data - lr_t * _m_hat / (np.sqrt(_v_hat) + eps)

        return state

##-------------------start-of-_apply_window()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _apply_window(model:JointModel,
                      window:typing.Sequence[Batch],
                      loss_fn:typing.Callable[[Batch, int], LossBreakdown],
                      state:AdamState,
                      config:TrainConfig) -> tuple[dict[str, float | None], float]:

        """

        Accumulates gradients over the window's batches, then applies one Adam update.

        Every batch loss is divided by the window's total target-token count, so the summed gradient equals that of the concatenated batch.

        Returns:
        (dict) : Window-level loss terms, None for terms that were not computed.
        (float) : The learning rate used.

        """

        _normalizer = sum(_batch.num_target_tokens for _batch in window)
        _terms:dict[str, float | None] = {"nll_st": None, "kd": None, "car": None, "nll_mt": None, "total": None}

        model.zero_grad()

        for _batch in window:

            with Graph() as _graph:

                _breakdown = loss_fn(_batch, _normalizer)
                _values = _breakdown.as_floats()

                if(not all(math.isfinite(_value) for _value in _values.values() if _value is not None)):
                    raise DivergenceError(f"Non-finite loss at update {state.step + 1} on batch {_batch.ids[:3]}: {_values}.")

                _graph.backward(_breakdown.total)

            for _key, _value in _values.items():
                if(_value is not None):
                    _terms[_key] = (_terms[_key] or 0.0) + _value

        ## parameters reached only through stop_gradient carry an all-zero gradient and sit the update out
        _grads = {_name: _param.grad for _name, _param in model.parameters.items() if _param.grad is not None and np.any(_param.grad)}

        _lr = TrainerService.learning_rate(state.step + 1, config.lr, config.warmup_steps)

        TrainerService.adam_step(model.parameters, _grads, state, _lr, config.adam_beta1, config.adam_beta2, config.adam_eps)

        return _terms, _lr

##-------------------start-of-_metrics_row()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _metrics_row(step:int, epoch:int, task:str, terms:typing.Mapping[str, float | None], lr:float) -> dict[str, typing.Any]:

        _row:dict[str, typing.Any] = {"step": step, "epoch": epoch, "task": task}

        for _key in ("nll_st", "kd", "car", "nll_mt", "total"):
            _row[_key] = "" if terms[_key] is None else repr(float(terms[_key]))

        _row["lr"] = repr(float(lr))

        return _row

    @staticmethod
    def _open_metrics(run_dir:str | None) -> tuple[typing.Any, typing.Any]:

        if(run_dir is None):
            return None, None

        os.makedirs(run_dir, exist_ok=True)

        _file = open(os.path.join(run_dir, "metrics.csv"), "w", encoding="utf-8", newline="")
        _writer = csv.DictWriter(_file, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        _writer.writeheader()

        return _file, _writer

##-------------------start-of-_save_epoch()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _save_epoch(model:JointModel, config:TrainConfig, epoch:int, step:int, extra:typing.Mapping[str, typing.Any]) -> tuple[Checkpoint, str | None]:

        _metadata = {"epoch": epoch, "step": step, "config_digest": TrainerService._config_digest}
        _metadata.update(extra)

        _checkpoint = to_checkpoint(model, **_metadata)

        if(config.checkpoint_dir is None):
            return _checkpoint, None

        _path = save_checkpoint(_checkpoint, os.path.join(config.checkpoint_dir, f"epoch{epoch:04d}{CHECKPOINT_SUFFIX}"))

        prune_checkpoints(config.checkpoint_dir, config.keep_last)

        return _checkpoint, _path

##-------------------start-of-dev_metrics()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def dev_metrics(model:JointModel, batches:typing.Sequence[Batch], label_smoothing:float) -> dict[str, float]:

        """

        Eval-mode, teacher-forced loss and token accuracy of a single-path model.

        """

        _loss = 0.0
        _tokens = 0
        _correct = 0

        for _batch in batches:

            if(model.has_speech):
                _memory, _mask = model._encode_speech_batch(_batch.frames, _batch.frame_mask)
            else:
                _memory, _mask = model._encode_text_batch(_batch.src_tokens, _batch.src_mask)

            _logits, _ = model._decode_batch(_memory, _mask, _batch.tgt_in)

            _loss += _nll_sum(_logits, _batch.tgt_out, label_smoothing, _batch.tgt_mask)[0].item()
            _tokens += _batch.num_target_tokens
            _correct += int(((_logits.data.argmax(axis=-1) == _batch.tgt_out) & _batch.tgt_mask).sum())

        return {"dev_loss": _loss / max(_tokens, 1), "dev_accuracy": _correct / max(_tokens, 1)}

##-------------------start-of-pretrain()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def pretrain(task:typing.Literal["asr", "mt"],
                 config:TrainConfig,
                 model_config:ModelConfig,
                 corpus:typing.Mapping[str, typing.Sequence[TrainingSample]],
                 run_dir:str | None = None) -> TrainingRun:

        """

        Trains a single-task model: "asr" maps train-split speech to its source tokens, "mt" maps the text-only pool's source to target.

        Parameters:
        task (literal["asr", "mt"]) : Which model to pretrain.
        config (TrainConfig) : Optimization settings; epochs may be 0.
        model_config (ModelConfig) : The architecture.
        corpus (mapping) : Split name -> samples, needs train/dev for asr and text_only/dev for mt.
        run_dir (string or None) : Where metrics.csv goes.

        Returns:
        (TrainingRun) : The final checkpoint under the canonical names, saved paths, metrics and per-epoch dev history.

        """

        if(task not in PRETRAINING_TASKS):
            raise InvalidEasySTSettingsException(f"Unknown pretraining task '{task}'.")

        _model = JointModel(model_config, task, seed=config.seed)
        _state = AdamState()

        if(task == "asr"):
            _train = [TrainingSample(_sample.id, _sample.source, list(_sample.source), _sample.speech) for _sample in corpus["train"]]
            _dev = [TrainingSample(_sample.id, _sample.source, list(_sample.source), _sample.speech) for _sample in corpus.get("dev", [])]
            _modality, _budget = "speech", config.max_tokens_speech
        else:
            _train = [TrainingSample(_sample.id, _sample.source, _sample.target) for _sample in corpus["text_only"]]
            _dev = [TrainingSample(_sample.id, _sample.source, _sample.target) for _sample in corpus.get("dev", [])]
            _modality, _budget = "text", config.max_tokens_text

        _dev_batches = DataService.batcher(_dev, _budget, [config.seed, 0], _modality)
        _dropout_rng = np.random.default_rng([config.seed, 4])
        _smoothing = config.weights.label_smoothing

        _run = TrainingRun(checkpoint=to_checkpoint(_model, epoch=0, step=0, config_digest=TrainerService._config_digest))
        _file, _writer = TrainerService._open_metrics(run_dir)

        try:
            for _epoch in range(1, config.epochs + 1):

                _batches = DataService.batcher(_train, _budget, [config.seed, _epoch], _modality)

                for _window in DataService.windows(_batches, config.accumulation):

                    _terms, _lr = TrainerService._apply_window(_model,
                                                               _window,
                                                               lambda _batch, _normalizer: single_task_loss(_batch, _model, _smoothing, _dropout_rng, _normalizer),
                                                               _state,
                                                               config)

                    _row = TrainerService._metrics_row(_state.step, _epoch, task, _terms, _lr)
                    _run.metrics.append(_row)

                    if(_writer is not None):
                        _writer.writerow(_row)

                _dev_scores = TrainerService.dev_metrics(_model, _dev_batches, _smoothing) if _dev_batches else {}
                _run.history.append({"epoch": _epoch, **_dev_scores})

                logging.info(f"{task} pretraining epoch {_epoch}/{config.epochs}: step {_state.step}, {', '.join(f'{_key} {_value:.4f}' for _key, _value in _dev_scores.items())}")

                _run.checkpoint, _path = TrainerService._save_epoch(_model, config, _epoch, _state.step, {})

                if(_path is not None):
                    _run.checkpoints.append(_path)

        finally:
            if(_file is not None):
                _file.close()

        _run.steps = _state.step

        return _run

##-------------------start-of-train_joint()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def train_joint(config:TrainConfig,
                    model_config:ModelConfig,
                    corpus:typing.Mapping[str, typing.Sequence[TrainingSample]],
                    asr_checkpoint:Checkpoint | None,
                    mt_checkpoint:Checkpoint | None,
                    run_dir:str | None = None) -> TrainingRun:

        """

        Joint fine-tuning of a scheme initialized from the pretrained checkpoints.

        Updates alternate between modalities, each update accumulating config.accumulation batches of one modality:
        speech updates optimize alpha * nll_st + (1 - alpha) * kd + lambda * car on the paired triplets,
        text updates optimize nll_mt on the text-only pool plus the paired text. The st scheme only makes speech updates with nll_st.

        Parameters:
        config (TrainConfig) : Scheme, loss weights and optimization settings.
        model_config (ModelConfig) : The architecture.
        corpus (mapping) : Split name -> samples, train required, text_only optional.
        asr_checkpoint, mt_checkpoint (Checkpoint or None) : The pretrained models.
        run_dir (string or None) : Where metrics.csv goes.

        Returns:
        (TrainingRun) : Final checkpoint, kept checkpoint paths, one metrics row per update.

        """

        _model = init_from_scheme(config.scheme, asr_checkpoint, mt_checkpoint, model_config, seed=config.seed)
        _state = AdamState()

        _dropout_rng = np.random.default_rng([config.seed, 5])
        _weights = config.weights

        _paired = list(corpus["train"])
        _text_pool = [TrainingSample(_sample.id, _sample.source, _sample.target) for _sample in list(corpus.get("text_only", [])) + _paired]

        _sources = {"asr": (asr_checkpoint.metadata.get("config_digest") if asr_checkpoint else None),
                    "mt": (mt_checkpoint.metadata.get("config_digest") if mt_checkpoint else None)}

        _run = TrainingRun(checkpoint=to_checkpoint(_model, epoch=0, step=0, config_digest=TrainerService._config_digest))
        _file, _writer = TrainerService._open_metrics(run_dir)

        def _speech_loss(batch:Batch, normalizer:int) -> LossBreakdown:
            return total_loss(batch, _model, _weights, _dropout_rng, include_mt_nll=False, normalizer=normalizer)

        def _text_loss(batch:Batch, normalizer:int) -> LossBreakdown:
            return text_loss(batch, _model, _weights.label_smoothing, _dropout_rng, normalizer)

        try:
            for _epoch in range(1, config.epochs + 1):

                _speech_windows = DataService.windows(DataService.batcher(_paired, config.max_tokens_speech, [config.seed, _epoch, 0], "speech"), config.accumulation)

                if(_model.has_text):
                    _text_windows = DataService.windows(DataService.batcher(_text_pool, config.max_tokens_text, [config.seed, _epoch, 1], "text"), config.accumulation)
                    _schedule = DataService.alternating_scheduler(_speech_windows, _text_windows)
                else:
                    _schedule = [("speech", _window) for _window in _speech_windows]

                for _modality, _window in _schedule:

                    _terms, _lr = TrainerService._apply_window(_model,
                                                               _window,
                                                               _speech_loss if _modality == "speech" else _text_loss,
                                                               _state,
                                                               config)

                    _row = TrainerService._metrics_row(_state.step, _epoch, "st" if _modality == "speech" else "mt", _terms, _lr)
                    _run.metrics.append(_row)

                    if(_writer is not None):
                        _writer.writerow(_row)

                logging.info(f"{config.scheme} epoch {_epoch}/{config.epochs}: step {_state.step}, last total {_run.metrics[-1]['total'] if _run.metrics else 'n/a'}")

                _run.checkpoint, _path = TrainerService._save_epoch(_model, config, _epoch, _state.step, {"sources": _sources})

                if(_path is not None):
                    _run.checkpoints.append(_path)

        finally:
            if(_file is not None):
                _file.close()

        ## pruning may have removed early paths
        _run.checkpoints = [_path for _path in _run.checkpoints if os.path.exists(_path)]
        _run.steps = _state.step

        return _run
