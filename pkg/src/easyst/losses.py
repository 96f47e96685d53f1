## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging

## third-party libraries
import numpy as np

## custom modules
from .classes import Batch, LossBreakdown, LossWeights, TrainingSample
from .engine import ops
from .engine.tensor import Tensor
from .exceptions import ContractError, DimensionError, VocabularyError
from .model.joint_model import JointModel
from .services.data_service import DataService
from .util.constants import MASK_BIAS

## cosine denominators are clamped here
NORM_FLOOR = 1e-8

##-------------------start-of-_column_mask()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _column_mask(mask:np.ndarray | None, tensor:Tensor) -> np.ndarray:

    """

    Turns an optional (..., N) mask into a (..., 1, N) float mask for a (..., d, N) tensor.

    """

    if(mask is None):
        return np.ones(tensor.shape[:-2] + (1, tensor.shape[-1]))

    return np.asarray(mask, dtype=np.float64)[..., None, :]

##-------------------start-of-similarity_matrix()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def similarity_matrix(speech_states:Tensor, text_states:Tensor, speech_mask:np.ndarray | None = None, text_mask:np.ndarray | None = None) -> Tensor:

    """

    Cosine similarity between every speech column and every text column.

    Parameters:
    speech_states (Tensor) : (..., d, N).
    text_states (Tensor) : (..., d, M).
    speech_mask, text_mask (np.ndarray or None) : (..., N) and (..., M) masks, only used to decide which columns count as degenerate.

    Returns:
    (Tensor) : (..., N, M), entries in [-1, 1].

    """

    if(speech_states.ndim < 2 or text_states.ndim < 2 or speech_states.shape[-2] != text_states.shape[-2]):
        raise DimensionError("similarity_matrix", speech_states.shape, text_states.shape)

    _norms = []

    for _states, _mask in ((speech_states, speech_mask), (text_states, text_mask)):

        _norm = ops.sqrt(ops.sum(ops.mul(_states, _states), axis=-2, keepdims=True))
        _real = _column_mask(_mask, _states) > 0

        if(np.any((_norm.data < NORM_FLOOR) & _real)):
            logging.warning("similarity_matrix: a real column has (near) zero norm; clamping its denominator to 1e-8.")

        _norms.append(ops.clamp_min(_norm, NORM_FLOOR))

    _dots = ops.matmul(ops.transpose(speech_states), text_states)

    return ops.div(_dots, ops.mul(ops.transpose(_norms[0]), _norms[1]))

##-------------------start-of-reconstruct()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def reconstruct(speech_states:Tensor, similarity:Tensor, speech_mask:np.ndarray | None = None) -> Tensor:

    """

    Rebuilds every text position as a convex combination of speech states: H_s . softmax_cols(S).

    Parameters:
    speech_states (Tensor) : (..., d, N).
    similarity (Tensor) : (..., N, M).
    speech_mask (np.ndarray or None) : (..., N), padded speech columns get zero weight.

    Returns:
    (Tensor) : (..., d, M).

    """

    if(similarity.ndim < 2 or similarity.shape[-2] != speech_states.shape[-1]):
        raise DimensionError("reconstruct", speech_states.shape, similarity.shape)

    if(speech_mask is not None):
        similarity = ops.add(similarity, np.where(np.asarray(speech_mask, dtype=bool), 0.0, MASK_BIAS)[..., :, None])

    return ops.matmul(speech_states, ops.softmax_cols(similarity))

def self_reconstruct(text_states:Tensor, text_mask:np.ndarray | None = None) -> Tensor:

    return reconstruct(text_states, similarity_matrix(text_states, text_states, text_mask, text_mask), text_mask)

##-------------------start-of-car_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def car_loss_per_sample(speech_states:Tensor, text_states:Tensor, speech_mask:np.ndarray | None = None, text_mask:np.ndarray | None = None) -> Tensor:

    """

    (1/M) ||H_s->t - sg[H_t->t]||_F per sample, over real text columns.

    The text states are detached on entry, so nothing reaches the text encoder through this term.

    Returns:
    (Tensor) : One value per leading index, a scalar for unbatched d x N / d x M inputs.

    """

    _text = ops.stop_gradient(text_states)

    _from_speech = reconstruct(speech_states, similarity_matrix(speech_states, _text, speech_mask, text_mask), speech_mask)
    _from_text = self_reconstruct(_text, text_mask)

    _columns = _column_mask(text_mask, text_states)
    _difference = ops.mul(ops.sub(_from_speech, _from_text.data), _columns)

    _frobenius = ops.sqrt(ops.sum(ops.mul(_difference, _difference), axis=(-2, -1)))

    return ops.div(_frobenius, _columns.sum(axis=(-2, -1)))

def car_loss(speech_states:Tensor, text_states:Tensor) -> Tensor:

    """

    Cross-attentive regularization between one d x N speech encoding and one d x M text encoding.

    """

    return car_loss_per_sample(speech_states, text_states)

##-------------------start-of-nll_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _nll_sum(logits:Tensor, targets:np.ndarray, label_smoothing:float, mask:np.ndarray | None = None) -> tuple[Tensor, int]:

    """

    Summed label-smoothed cross-entropy; smoothing mass eps is spread over the |V| - 1 non-target labels.

    Returns:
    (Tensor) : The sum over real positions.
    (int) : The number of real positions.

    """

    targets = np.asarray(targets, dtype=np.int64)
    _vocab = logits.shape[-1]

    if(logits.shape[:-1] != targets.shape):
        raise DimensionError("nll_loss", logits.shape, targets.shape)

    if(targets.size and (targets.min() < 0 or targets.max() >= _vocab)):
        raise VocabularyError(f"Target id outside [0, {_vocab}) in nll_loss.")

    _log_probs = ops.log_softmax(logits, axis=-1)
    _picked = ops.take_last(_log_probs, targets)

    if(label_smoothing > 0.0):
        _off = label_smoothing / (_vocab - 1)
        _per_position = ops.add(ops.scale(_picked, -(1.0 - label_smoothing - _off)), ops.scale(ops.sum(_log_probs, axis=-1), -_off))
    else:
        _per_position = ops.scale(_picked, -1.0)

    _weights = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=np.float64)

    return ops.sum(ops.mul(_per_position, _weights)), int(_weights.sum())

def nll_loss(logits:Tensor, targets:np.ndarray, label_smoothing:float = 0.0, mask:np.ndarray | None = None) -> Tensor:

    """

    Label-smoothed negative log-likelihood averaged per target token.

    Parameters:
    logits (Tensor) : (..., K, |V|).
    targets (np.ndarray) : (..., K) ids.
    label_smoothing (float) : eps in [0, 1).
    mask (np.ndarray or None) : (..., K), padding excluded.

    """

    _total, _count = _nll_sum(logits, targets, label_smoothing, mask)

    return ops.scale(_total, 1.0 / max(_count, 1))

##-------------------start-of-kd_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _kd_sum(student_logits:Tensor, teacher_logits:Tensor, mask:np.ndarray | None = None) -> tuple[Tensor, int]:

    if(student_logits.shape != teacher_logits.shape):
        raise DimensionError("kd_loss", student_logits.shape, teacher_logits.shape)

    _teacher = ops.softmax(ops.stop_gradient(teacher_logits), axis=-1)
    _cross = ops.scale(ops.sum(ops.mul(ops.log_softmax(student_logits, axis=-1), _teacher), axis=-1), -1.0)

    _weights = np.ones(_cross.shape) if mask is None else np.asarray(mask, dtype=np.float64)

    return ops.sum(ops.mul(_cross, _weights)), int(_weights.sum())

def kd_loss(student_logits:Tensor, teacher_logits:Tensor, mask:np.ndarray | None = None) -> Tensor:

    """

    Cross-entropy from the detached teacher distribution softmax(teacher_logits) into the student, averaged per token.

    """

    _total, _count = _kd_sum(student_logits, teacher_logits, mask)

    return ops.scale(_total, 1.0 / max(_count, 1))

##-------------------start-of-total_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def total_loss(batch:Batch | TrainingSample,
               model:JointModel,
               weights:LossWeights,
               rng:np.random.Generator | None = None,
               include_mt_nll:bool = True,
               normalizer:int | None = None) -> LossBreakdown:

    """

    The joint objective on paired speech/text input.

    total = alpha * nll_st + (1 - alpha) * kd + lambda * car + nll_mt

    Both encoders run, then two teacher-forced decoder passes with the same targets. Every term is a token sum divided
    by normalizer (the batch's target-token count by default); CAR enters once per target token of its sample.
    A model without a text path returns nll_st alone.

    Parameters:
    batch (Batch or TrainingSample) : Paired input, speech required.
    model (JointModel) : The model.
    weights (LossWeights) : alpha, lambda and label smoothing.
    rng (Generator or None) : Dropout generator, shared by both passes.
    include_mt_nll (bool) : Whether nll_mt joins the total. Speech updates leave it to the text batches.
    normalizer (int or None) : Token count to divide by, e.g. an accumulation window's.

    Returns:
    (LossBreakdown) : The terms, still attached to the current graph.

    """

    if(isinstance(batch, TrainingSample)):
        batch = DataService.collate([batch])

    if(not batch.has_speech):
        raise ContractError("total_loss needs speech input; use text_loss for text-only batches.")

    _normalizer = batch.num_target_tokens if normalizer is None else normalizer
    _scale = 1.0 / max(_normalizer, 1)

    _speech_memory, _speech_mask = model._encode_speech_batch(batch.frames, batch.frame_mask, rng)
    _speech_logits, _ = model._decode_batch(_speech_memory, _speech_mask, batch.tgt_in, rng)

    _nll_st_sum, _count = _nll_sum(_speech_logits, batch.tgt_out, weights.label_smoothing, batch.tgt_mask)
    _nll_st = ops.scale(_nll_st_sum, _scale)

    if(not model.has_text):
        return LossBreakdown(total=_nll_st, nll_st=_nll_st, num_tokens=_count)

    _text_memory, _text_mask = model._encode_text_batch(batch.src_tokens, batch.src_mask, rng)
    _text_logits, _ = model._decode_batch(_text_memory, _text_mask, batch.tgt_in, rng)

    _kd = ops.scale(_kd_sum(_speech_logits, _text_logits, batch.tgt_mask)[0], _scale)

    ## d x N layout per sample
    _per_sample_car = car_loss_per_sample(ops.transpose(_speech_memory), ops.transpose(_text_memory), _speech_mask, _text_mask)
    _car = ops.scale(ops.sum(ops.mul(_per_sample_car, batch.tgt_mask.sum(axis=1).astype(np.float64))), _scale)

    _total = ops.add(ops.add(ops.scale(_nll_st, weights.alpha), ops.scale(_kd, 1.0 - weights.alpha)), ops.scale(_car, weights.lambda_))

    _nll_mt = None

    if(include_mt_nll):
        _nll_mt = ops.scale(_nll_sum(_text_logits, batch.tgt_out, weights.label_smoothing, batch.tgt_mask)[0], _scale)
        _total = ops.add(_total, _nll_mt)

    return LossBreakdown(total=_total, nll_st=_nll_st, nll_mt=_nll_mt, kd=_kd, car=_car, num_tokens=_count)

##-------------------start-of-text_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def text_loss(batch:Batch, model:JointModel, label_smoothing:float, rng:np.random.Generator | None = None, normalizer:int | None = None) -> LossBreakdown:

    """

    nll_mt of a text batch, the only term text-only updates optimize.

    """

    _normalizer = batch.num_target_tokens if normalizer is None else normalizer

    _memory, _mask = model._encode_text_batch(batch.src_tokens, batch.src_mask, rng)
    _logits, _ = model._decode_batch(_memory, _mask, batch.tgt_in, rng)

    _sum, _count = _nll_sum(_logits, batch.tgt_out, label_smoothing, batch.tgt_mask)
    _nll_mt = ops.scale(_sum, 1.0 / max(_normalizer, 1))

    return LossBreakdown(total=_nll_mt, nll_mt=_nll_mt, num_tokens=_count)

def single_task_loss(batch:Batch, model:JointModel, label_smoothing:float, rng:np.random.Generator | None = None, normalizer:int | None = None) -> LossBreakdown:

    """

    Pretraining objective: NLL of whichever single path the model has.

    """

    if(model.has_speech):
        _normalizer = batch.num_target_tokens if normalizer is None else normalizer

        _memory, _mask = model._encode_speech_batch(batch.frames, batch.frame_mask, rng)
        _logits, _ = model._decode_batch(_memory, _mask, batch.tgt_in, rng)

        _sum, _count = _nll_sum(_logits, batch.tgt_out, label_smoothing, batch.tgt_mask)
        _nll = ops.scale(_sum, 1.0 / max(_normalizer, 1))

        return LossBreakdown(total=_nll, nll_st=_nll, num_tokens=_count)

    return text_loss(batch, model, label_smoothing, rng, normalizer)
