## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import asyncio
import logging
import typing

## third-party libraries
import numpy as np

## custom modules
from .data_service import DataService
from .evaluation_service import EvaluationService
from ..classes import Checkpoint, CorrelationProfile, CriticalityCurve, ModuleSelector, TrainingSample
from ..decorators import _async_logging_decorator, _sync_logging_decorator
from ..exceptions import AnalysisError
from ..model.joint_model import JointModel
from ..model.schemes import from_checkpoint, rollback_rules

## model prefix -> (pretrained checkpoint, matching prefix inside it)
RollbackMap = dict[str, tuple[Checkpoint, str]]

## component order for sorting curves, bottom of the network first
_COMPONENT_ORDER = ["speech_frontend", "speech_encoder", "text_embedding", "text_encoder", "shared_encoder", "decoder", "output_projection"]

class AnalysisService:

    """

    Criticality curves by rolling modules back toward pretrained values, and per decoder layer speech/text correlation.

    """

    _log_directory:str | None = None

    _semaphore_value:int = 4
    _semaphore:asyncio.Semaphore = asyncio.Semaphore(_semaphore_value)

    _beam_size:int = 5

##-------------------start-of-set_attributes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _set_attributes(log_directory:str | None = None, semaphore:int | None = None, beam_size:int = 5) -> None:

        AnalysisService._log_directory = log_directory
        AnalysisService._beam_size = beam_size

        if(semaphore is not None and semaphore > 0):
            AnalysisService._semaphore_value = semaphore
            AnalysisService._semaphore = asyncio.Semaphore(semaphore)

##-------------------start-of-interpolate_module()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def interpolate_module(trained:Checkpoint,
                           pretrained:Checkpoint,
                           selector:ModuleSelector,
                           ratio:float,
                           model_prefix:str | None = None,
                           source_prefix:str | None = None) -> Checkpoint:

        """

        Rolls the selected tensors back: (1 - ratio) * trained + ratio * pretrained. Everything else is copied from trained.

        Parameters:
        trained (Checkpoint) : The fine-tuned model.
        pretrained (Checkpoint) : The model the module was initialized from.
        selector (ModuleSelector) : Which tensors to move.
        ratio (float) : Weight on the pretrained values, in [0, 1]. 1.0 means the pretrained parameters are used.
        model_prefix, source_prefix (string or None) : Renaming rule when the pretrained checkpoint names the module differently,
        e.g. "shared_encoder" -> "text_encoder".

        Returns:
        (Checkpoint) : The interpolated checkpoint. ratio 0 and 1 copy values bit for bit.

        """

        if(not 0.0 <= ratio <= 1.0):
            raise AnalysisError(f"Interpolation ratio must be in [0, 1], got {ratio}.")

        _matched = [_name for _name in trained.names() if selector.matches(_name)]

        if(not _matched):
            raise AnalysisError(f"Selector '{selector.prefix}' matches no tensor.")

        _tensors = {_name: _value.copy() for _name, _value in trained.tensors.items()}

        for _name in _matched:

            _source_name = _name if model_prefix is None else (source_prefix or model_prefix) + _name[len(model_prefix):]

            if(_source_name not in pretrained.tensors):
                raise AnalysisError(f"Pretrained checkpoint has no '{_source_name}' for '{_name}'.")

            _old = pretrained.tensors[_source_name]
            _new = trained.tensors[_name]

            if(_old.shape != _new.shape):
                raise AnalysisError(f"Shape mismatch for '{_name}': trained {_new.shape}, pretrained {_old.shape}.")

            if(ratio == 0.0):
                _tensors[_name] = _new.copy()
            elif(ratio == 1.0):
                _tensors[_name] = _old.astype(np.float32)
            else:
                _tensors[_name] = ((1.0 - ratio) * _new.astype(np.float64) + ratio * _old.astype(np.float64)).astype(np.float32)

        _metadata = dict(trained.metadata)
        _metadata["interpolation"] = {"selector": selector.prefix, "ratio": ratio}

        return Checkpoint(tensors=_tensors, metadata=_metadata, version=trained.version)

##-------------------start-of-rollback_map()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def rollback_map(trained:Checkpoint, asr_checkpoint:Checkpoint | None, mt_checkpoint:Checkpoint | None) -> RollbackMap:

        """

        Which pretrained checkpoint backs each module of the trained checkpoint's scheme, e.g. jt-s-mt shared layers -> the MT text encoder.

        """

        if(trained.scheme is None):
            raise AnalysisError("Trained checkpoint does not record its scheme.")

        _sources = {"asr": asr_checkpoint, "mt": mt_checkpoint}
        _map:RollbackMap = {}

        for _model_prefix, _source, _source_prefix in rollback_rules(trained.scheme):
            if(_sources[_source] is not None):
                _map[_model_prefix] = (_sources[_source], _source_prefix)

        return _map

    @staticmethod
    def default_selectors(checkpoint:Checkpoint) -> list[ModuleSelector]:

        """

        One selector per speech-encoder, shared-encoder and decoder layer present in the checkpoint.

        """

        _prefixes = set()

        for _name in checkpoint.names():
            _parts = _name.split(".")
            if(_parts[0] in ("speech_encoder", "shared_encoder", "decoder") and len(_parts) > 1 and _parts[1].isdigit()):
                _prefixes.add(f"{_parts[0]}.{_parts[1]}")

        return sorted((ModuleSelector(_prefix) for _prefix in _prefixes), key=AnalysisService._selector_order)

    @staticmethod
    def _selector_order(selector:ModuleSelector) -> tuple[int, int, str]:

        _parts = selector.prefix.split(".")
        _component = _COMPONENT_ORDER.index(_parts[0]) if _parts[0] in _COMPONENT_ORDER else len(_COMPONENT_ORDER)
        _layer = int(_parts[1]) if len(_parts) > 1 and _parts[1].isdigit() else -1

        return _component, _layer, selector.prefix

    @staticmethod
    def _resolve(selector:ModuleSelector, rollback:RollbackMap) -> tuple[Checkpoint, str, str]:

        for _model_prefix, (_checkpoint, _source_prefix) in rollback.items():
            if(ModuleSelector(_model_prefix).matches(selector.prefix)):
                return _checkpoint, _model_prefix, _source_prefix

        raise AnalysisError(f"No pretrained checkpoint backs '{selector.prefix}'.")

##-------------------start-of-_cell()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _bleu(checkpoint:Checkpoint, dev_set:typing.Sequence[TrainingSample], modality:typing.Literal["speech", "text"]) -> float:

        _model = from_checkpoint(checkpoint)

        return EvaluationService.evaluate(_model, dev_set, modality, AnalysisService._beam_size)[0]

    @staticmethod
    def _cell(trained:Checkpoint,
              rollback:RollbackMap,
              selector:ModuleSelector,
              ratio:float,
              dev_set:typing.Sequence[TrainingSample],
              modality:typing.Literal["speech", "text"]) -> float:

        _pretrained, _model_prefix, _source_prefix = AnalysisService._resolve(selector, rollback)
        _interpolated = AnalysisService.interpolate_module(trained, _pretrained, selector, ratio, _model_prefix, _source_prefix)

        return AnalysisService._bleu(_interpolated, dev_set, modality)

    @staticmethod
    def _assemble(selectors:typing.Sequence[ModuleSelector], ratios:typing.Sequence[float], baseline:float, scores:dict[tuple[str, float], float]) -> list[CriticalityCurve]:

        _curves = []

        for _selector in sorted(selectors, key=AnalysisService._selector_order):

            _bleu = [scores[(_selector.prefix, _ratio)] for _ratio in ratios]

            _curves.append(CriticalityCurve(selector=_selector,
                                            ratios=list(ratios),
                                            bleu=_bleu,
                                            bleu_delta=[_value - baseline for _value in _bleu]))

        return _curves

    @staticmethod
    def _validate_sweep(selectors:typing.Sequence[ModuleSelector], ratios:typing.Sequence[float]) -> None:

        if(not selectors):
            raise AnalysisError("criticality_sweep needs at least one selector.")

        if(not ratios):
            raise AnalysisError("criticality_sweep needs at least one ratio.")

        _bad = [_ratio for _ratio in ratios if not 0.0 <= _ratio <= 1.0]

        if(_bad):
            raise AnalysisError(f"Ratios must lie in [0, 1], got {_bad}.")

##-------------------start-of-criticality_sweep()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def criticality_sweep(trained:Checkpoint,
                          rollback:RollbackMap,
                          selectors:typing.Sequence[ModuleSelector],
                          ratios:typing.Sequence[float],
                          dev_set:typing.Sequence[TrainingSample],
                          modality:typing.Literal["speech", "text"] = "speech") -> list[CriticalityCurve]:

        """

        BLEU of the trained model with each selected module rolled back by each ratio.

        Every ratio is scored on its own interpolated checkpoint, ratio 0 included. That checkpoint copies the trained values bit for bit, so its delta is 0.

        Parameters:
        trained (Checkpoint) : The fine-tuned model.
        rollback (RollbackMap) : Pretrained source per module, see rollback_map.
        selectors (sequence of ModuleSelector) : Modules to roll back, one curve each.
        ratios (sequence of float) : Weights on the pretrained values.
        dev_set (sequence of TrainingSample) : Scored with beam search.
        modality (literal["speech", "text"]) : Which input to decode from.

        Returns:
        (list of CriticalityCurve) : Ordered bottom layer first.

        """

        AnalysisService._validate_sweep(selectors, ratios)

        _baseline = AnalysisService._bleu(trained, dev_set, modality)
        _scores = {}

        for _selector in selectors:
            for _ratio in ratios:
                _scores[(_selector.prefix, _ratio)] = AnalysisService._cell(trained, rollback, _selector, _ratio, dev_set, modality)
                logging.info(f"criticality {_selector.prefix} ratio {_ratio}: BLEU {_scores[(_selector.prefix, _ratio)]:.2f} (baseline {_baseline:.2f})")

        return AnalysisService._assemble(selectors, ratios, _baseline, _scores)

    @staticmethod
    @_async_logging_decorator
    async def criticality_sweep_async(trained:Checkpoint,
                                      rollback:RollbackMap,
                                      selectors:typing.Sequence[ModuleSelector],
                                      ratios:typing.Sequence[float],
                                      dev_set:typing.Sequence[TrainingSample],
                                      modality:typing.Literal["speech", "text"] = "speech") -> list[CriticalityCurve]:

        """

        criticality_sweep with the (selector, ratio) cells evaluated concurrently on their own model copies, at most _semaphore_value at a time.

        """

        AnalysisService._validate_sweep(selectors, ratios)

        _loop = asyncio.get_running_loop()

        async def _run(function, *args):
            async with AnalysisService._semaphore:
                return await _loop.run_in_executor(None, function, *args)

        _cells = [(_selector, _ratio) for _selector in selectors for _ratio in ratios]

        _results = await asyncio.gather(_run(AnalysisService._bleu, trained, dev_set, modality),
                                        *[_run(AnalysisService._cell, trained, rollback, _selector, _ratio, dev_set, modality) for _selector, _ratio in _cells])

        _scores = {(_selector.prefix, _ratio): _score for (_selector, _ratio), _score in zip(_cells, _results[1:])}

        return AnalysisService._assemble(selectors, ratios, _results[0], _scores)

##-------------------start-of-pearson()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def correlation_components(speech_series:np.ndarray, text_series:np.ndarray) -> tuple[np.ndarray, list[int]]:

        """

        Two-pass Pearson correlation per column of two P x D series.

        Returns:
        (np.ndarray) : D coefficients; a column with zero variance on either side gets 0.
        (list of int) : The zero-variance columns.

        """

        speech_series = np.asarray(speech_series, dtype=np.float64)
        text_series = np.asarray(text_series, dtype=np.float64)

        if(speech_series.shape != text_series.shape or speech_series.ndim != 2):
            raise AnalysisError(f"Correlation needs two P x D series of equal shape, got {speech_series.shape} and {text_series.shape}.")

        if(speech_series.shape[0] < 2):
            raise AnalysisError("Correlation needs at least two points.")

        _speech_centered = speech_series - speech_series.mean(axis=0)
        _text_centered = text_series - text_series.mean(axis=0)

        _covariance = (_speech_centered * _text_centered).sum(axis=0)
        _variance = (_speech_centered * _speech_centered).sum(axis=0) * (_text_centered * _text_centered).sum(axis=0)

        _degenerate = (np.ptp(speech_series, axis=0) == 0) | (np.ptp(text_series, axis=0) == 0) | (_variance <= 0.0)

        _coefficients = np.zeros(speech_series.shape[1])
        _coefficients[~_degenerate] = _covariance[~_degenerate] / np.sqrt(_variance[~_degenerate])

        return _coefficients, [int(_index) for _index in np.flatnonzero(_degenerate)]

    @staticmethod
    def pearson(a:typing.Sequence[float], b:typing.Sequence[float]) -> float:

        _coefficients, _ = AnalysisService.correlation_components(np.asarray(a, dtype=np.float64)[:, None], np.asarray(b, dtype=np.float64)[:, None])

        return float(_coefficients[0])

##-------------------start-of-correlation_from_states()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def correlation_from_states(speech_layers:typing.Sequence[np.ndarray], text_layers:typing.Sequence[np.ndarray], label:str = "") -> CorrelationProfile:

        """

        Builds a profile from aligned P x D state matrices, one pair per decoder layer. r(l) is the mean of the D per-component coefficients.

        """

        if(len(speech_layers) != len(text_layers) or not speech_layers):
            raise AnalysisError("Need the same non-zero number of layers on both sides.")

        _means = []
        _components = []
        _flagged = []

        for _layer, (_speech, _text) in enumerate(zip(speech_layers, text_layers)):

            _coefficients, _degenerate = AnalysisService.correlation_components(_speech, _text)

            if(_degenerate):
                logging.warning(f"Decoder layer {_layer}: {len(_degenerate)} components have zero variance; their coefficient is set to 0.")

            _means.append(float(_coefficients.mean()))
            _components.append(_coefficients)
            _flagged.append(_degenerate)

        return CorrelationProfile(layer_coefficients=_means,
                                  components=_components,
                                  flagged=_flagged,
                                  n_points=int(np.asarray(speech_layers[0]).shape[0]),
                                  label=label)

##-------------------start-of-collect_decoder_states()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def collect_decoder_states(model:JointModel, samples:typing.Sequence[TrainingSample], batch_size:int = 32) -> tuple[list[np.ndarray], list[np.ndarray]]:

        """

        Eval-mode decoder states under speech input and under text input, teacher-forced with the same targets.

        Returns:
        (list of np.ndarray) : Per layer P x D speech-conditioned states, P = all real target positions of all samples.
        (list of np.ndarray) : The aligned text-conditioned states.

        """

        if(not (model.has_speech and model.has_text)):
            raise AnalysisError(f"Layout '{model.layout}' lacks a speech or a text path; correlation needs both.")

        _missing = [_sample.id for _sample in samples if _sample.speech is None]

        if(_missing):
            raise AnalysisError(f"Sample {_missing[0]} has no speech; correlation needs paired samples.")

        _speech_rows:list[list[np.ndarray]] = [[] for _ in range(model.config.n_decoder_layers)]
        _text_rows:list[list[np.ndarray]] = [[] for _ in range(model.config.n_decoder_layers)]

        for _start in range(0, len(samples), batch_size):

            _batch = DataService.collate(samples[_start:_start + batch_size])

            _speech_memory, _speech_mask = model._encode_speech_batch(_batch.frames, _batch.frame_mask)
            _, _speech_states = model._decode_batch(_speech_memory, _speech_mask, _batch.tgt_in, collect_states=True)

            _text_memory, _text_mask = model._encode_text_batch(_batch.src_tokens, _batch.src_mask)
            _, _text_states = model._decode_batch(_text_memory, _text_mask, _batch.tgt_in, collect_states=True)

            for _layer in range(model.config.n_decoder_layers):
                _speech_rows[_layer].append(_speech_states[_layer].data[_batch.tgt_mask])
                _text_rows[_layer].append(_text_states[_layer].data[_batch.tgt_mask])

        return [np.concatenate(_rows) for _rows in _speech_rows], [np.concatenate(_rows) for _rows in _text_rows]

##-------------------start-of-modality_correlation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def modality_correlation(model:JointModel, paired_dev:typing.Sequence[TrainingSample], label:str = "") -> CorrelationProfile:

        """

        Per decoder layer Pearson correlation between speech-conditioned and text-conditioned hidden states, pooled over samples and positions.

        Parameters:
        model (JointModel) : A model with both paths.
        paired_dev (sequence of TrainingSample) : Samples with speech and source.
        label (string) : Name for reports.

        Returns:
        (CorrelationProfile) : One coefficient per decoder layer, bottom first.

        """

        if(not paired_dev):
            raise AnalysisError("modality_correlation needs at least one paired sample.")

        _speech_layers, _text_layers = AnalysisService.collect_decoder_states(model, paired_dev)

        _profile = AnalysisService.correlation_from_states(_speech_layers, _text_layers, label)

        logging.info(f"Correlation {label or model.layout}: {', '.join(f'{_value:.4f}' for _value in _profile.layer_coefficients)} over {_profile.n_points} points.")

        return _profile
