## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
from collections import Counter

import asyncio
import logging
import math
import os
import typing

## third-party libraries
import numpy as np

## custom modules
from ..classes import Hypothesis, TrainingSample
from ..decorators import _async_logging_decorator, _sync_logging_decorator
from ..engine.tensor import Tensor
from ..exceptions import ContractError
from ..model.joint_model import JointModel
from ..util.constants import BOS_ID, EOS_ID, NUM_SPECIAL_TOKENS

StepFunction = typing.Callable[[list[list[int]]], np.ndarray]

class EvaluationService:

    """

    Beam search, corpus BLEU over token ids and hypothesis dump files.

    """

    _log_directory:str | None = None

    _semaphore_value:int = 4
    _semaphore:asyncio.Semaphore = asyncio.Semaphore(_semaphore_value)

##-------------------start-of-set_attributes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _set_attributes(log_directory:str | None = None, semaphore:int | None = None) -> None:

        EvaluationService._log_directory = log_directory

        if(semaphore is not None):
            EvaluationService._semaphore_value = semaphore
            EvaluationService._semaphore = asyncio.Semaphore(semaphore)

##-------------------start-of-beam_search_steps()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def beam_search_steps(step_fn:StepFunction, beam_size:int, max_len:int, bos:int = BOS_ID, eos:int = EOS_ID) -> Hypothesis:

        """

        Beam search over any next-token scorer.

        Each step keeps the beam_size best extensions of the live prefixes. Extensions ending in eos leave the beam as finished
        hypotheses and the live beam shrinks accordingly; the search stops once beam_size hypotheses finished, nothing is live, or
        max_len tokens were produced. Candidates compete on logprob / length.

        Parameters:
        step_fn (callable) : Prefixes (each starting with bos) -> n x |V| next-token log-probabilities.
        beam_size (int) : At least 1.
        max_len (int) : The most tokens a hypothesis may hold, eos included.

        Returns:
        (Hypothesis) : The best finished hypothesis, else the best live one at max_len. tokens exclude bos.

        """

        if(beam_size < 1):
            raise ContractError(f"beam_size must be at least 1, got {beam_size}.")

        if(max_len < 1):
            raise ContractError(f"max_len must be at least 1, got {max_len}.")

        _live:list[tuple[list[int], float]] = [([bos], 0.0)]
        _finished:list[Hypothesis] = []

        for _ in range(max_len):

            _log_probs = np.asarray(step_fn([_prefix for _prefix, _ in _live]), dtype=np.float64)
            _scores = (np.asarray([_logprob for _, _logprob in _live])[:, None] + _log_probs).reshape(-1)

            _width = beam_size - len(_finished)

            ## stable sort keeps ties in (beam, token) order
            _best = np.argsort(-_scores, kind="stable")[:_width]

            _next:list[tuple[list[int], float]] = []

            for _flat in _best:

                _beam, _token = divmod(int(_flat), _log_probs.shape[1])
                _tokens = _live[_beam][0] + [_token]
                _logprob = float(_scores[_flat])

                if(_token == eos):
                    _finished.append(Hypothesis(tokens=_tokens[1:], logprob=_logprob, score=_logprob / (len(_tokens) - 1), finished=True))
                else:
                    _next.append((_tokens, _logprob))

            _live = _next

            if(len(_finished) >= beam_size or not _live):
                break

        if(_finished):
            return max(_finished, key=lambda _hypothesis: _hypothesis.score)

        _candidates = [Hypothesis(tokens=_tokens[1:], logprob=_logprob, score=_logprob / (len(_tokens) - 1), finished=False) for _tokens, _logprob in _live]

        return max(_candidates, key=lambda _hypothesis: _hypothesis.score)

##-------------------start-of-_step_function()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _encode_input(model:JointModel, source:np.ndarray | typing.Sequence[int]) -> tuple[Tensor, np.ndarray, int]:

        """

        Encodes one input, a d_s x N float matrix (speech) or a token list (text).

        Returns:
        (Tensor) : 1 x L x d memory.
        (np.ndarray) : 1 x L mask.
        (int) : The default max_len, 2 x L + 8 for the encoder length L.

        """

        _array = np.asarray(source)

        if(_array.ndim == 2 and np.issubdtype(_array.dtype, np.floating)):
            _memory, _mask = model._encode_speech_batch(_array.T[None].astype(np.float64), np.ones((1, _array.shape[1]), dtype=bool))
        else:
            _tokens = np.asarray(source, dtype=np.int64)[None]
            _memory, _mask = model._encode_text_batch(_tokens, np.ones(_tokens.shape, dtype=bool))

        return _memory, _mask, 2 * int(_mask.sum()) + 8

    @staticmethod
    def _model_step_function(model:JointModel, memory:Tensor, mask:np.ndarray) -> StepFunction:

        def _step(prefixes:list[list[int]]) -> np.ndarray:

            _count = len(prefixes)
            _tokens = np.asarray(prefixes, dtype=np.int64)

            _memory = Tensor(np.repeat(memory.data, _count, axis=0))
            _logits, _ = model._decode_batch(_memory, np.repeat(mask, _count, axis=0), _tokens)

            _last = _logits.data[:, -1, :]
            _shifted = _last - _last.max(axis=-1, keepdims=True)

            return _shifted - np.log(np.exp(_shifted).sum(axis=-1, keepdims=True))

        return _step

##-------------------start-of-beam_search()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def beam_search(model:JointModel, source:np.ndarray | typing.Sequence[int], beam_size:int = 5, max_len:int | None = None) -> Hypothesis:

        """

        Decodes one input in eval mode.

        Parameters:
        model (JointModel) : The model.
        source (np.ndarray or sequence of int) : d_s x N speech features, or source token ids.
        beam_size (int) : Beam width.
        max_len (int or None) : Defaults to 2 x encoder length + 8, capped by max_positions.

        """

        _memory, _mask, _default = EvaluationService._encode_input(model, source)

        if(max_len is None):
            max_len = min(_default, model.config.max_positions)

        return EvaluationService.beam_search_steps(EvaluationService._model_step_function(model, _memory, _mask), beam_size, max_len)

    @staticmethod
    def greedy_decode(model:JointModel, source:np.ndarray | typing.Sequence[int], max_len:int | None = None) -> list[int]:

        """

        Plain argmax decoding, one full decoder pass per emitted token.

        """

        _memory, _mask, _default = EvaluationService._encode_input(model, source)

        if(max_len is None):
            max_len = min(_default, model.config.max_positions)

        _tokens = [BOS_ID]

        for _ in range(max_len):

            _logits, _ = model._decode_batch(_memory, _mask, np.asarray([_tokens], dtype=np.int64))
            _next = int(np.argmax(_logits.data[0, -1]))
            _tokens.append(_next)

            if(_next == EOS_ID):
                break

        return _tokens[1:]

##-------------------start-of-corpus_bleu()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _ngrams(tokens:typing.Sequence[int], order:int) -> Counter:

        return Counter(tuple(tokens[_index:_index + order]) for _index in range(len(tokens) - order + 1))

    @staticmethod
    def corpus_bleu(hypotheses:typing.Sequence[typing.Sequence[int]], references:typing.Sequence[typing.Sequence[int]], max_order:int = 4) -> float:

        """

        Corpus-level BLEU-4 over token ids, no smoothing.

        Clipped n-gram matches and totals are summed over the corpus, the geometric mean of the four precisions is
        multiplied by exp(min(0, 1 - ref_len / hyp_len)). Any zero precision gives 0.

        Returns:
        (float) : BLEU in [0, 100].

        """

        if(len(hypotheses) != len(references)):
            raise ContractError(f"{len(hypotheses)} hypotheses for {len(references)} references.")

        if(not references):
            raise ContractError("corpus_bleu needs at least one reference.")

        _matches = [0] * max_order
        _totals = [0] * max_order
        _hyp_len = 0
        _ref_len = 0

        for _hypothesis, _reference in zip(hypotheses, references):

            _hyp_len += len(_hypothesis)
            _ref_len += len(_reference)

            for _order in range(1, max_order + 1):

                _hyp_counts = EvaluationService._ngrams(_hypothesis, _order)
                _ref_counts = EvaluationService._ngrams(_reference, _order)

                _matches[_order - 1] += sum(min(_count, _ref_counts[_gram]) for _gram, _count in _hyp_counts.items())
                _totals[_order - 1] += max(len(_hypothesis) - _order + 1, 0)

        if(_hyp_len == 0 or min(_matches) == 0):
            return 0.0

        _log_precision = sum(math.log(_match / _total) for _match, _total in zip(_matches, _totals)) / max_order
        _brevity = min(0.0, 1.0 - _ref_len / _hyp_len)

        return 100.0 * math.exp(_log_precision + _brevity)

    @staticmethod
    def strip_special(tokens:typing.Sequence[int]) -> list[int]:

        """

        Cuts at the first eos and drops any other special id.

        """

        _kept = []

        for _token in tokens:
            if(_token == EOS_ID):
                break
            if(_token >= NUM_SPECIAL_TOKENS):
                _kept.append(int(_token))

        return _kept

##-------------------start-of-translate_dataset()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _source_of(sample:TrainingSample, modality:typing.Literal["speech", "text"]) -> np.ndarray | list[int]:

        if(modality == "speech"):
            if(sample.speech is None):
                raise ContractError(f"Sample {sample.id} has no speech features.")
            return sample.speech

        return sample.source

    @staticmethod
    def translate_dataset(model:JointModel, samples:typing.Sequence[TrainingSample], modality:typing.Literal["speech", "text"] = "speech", beam_size:int = 5) -> list[Hypothesis]:

        return [EvaluationService.beam_search(model, EvaluationService._source_of(_sample, modality), beam_size) for _sample in samples]

    @staticmethod
    async def translate_dataset_async(model:JointModel, samples:typing.Sequence[TrainingSample], modality:typing.Literal["speech", "text"] = "speech", beam_size:int = 5) -> list[Hypothesis]:

        """

        Same output as translate_dataset, with samples decoded concurrently in the default executor under the class semaphore.

        """

        _loop = asyncio.get_running_loop()

        async def _one(sample:TrainingSample) -> Hypothesis:
            async with EvaluationService._semaphore:
                return await _loop.run_in_executor(None, EvaluationService.beam_search, model, EvaluationService._source_of(sample, modality), beam_size)

        return list(await asyncio.gather(*[_one(_sample) for _sample in samples]))

##-------------------start-of-evaluate()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def evaluate(model:JointModel, samples:typing.Sequence[TrainingSample], modality:typing.Literal["speech", "text"] = "speech", beam_size:int = 5) -> tuple[float, list[Hypothesis]]:

        """

        Decodes samples and scores them against their targets.

        Returns:
        (float) : Corpus BLEU.
        (list of Hypothesis) : One per sample, in order.

        """

        _hypotheses = EvaluationService.translate_dataset(model, samples, modality, beam_size)

        _bleu = EvaluationService.corpus_bleu([EvaluationService.strip_special(_hypothesis.tokens) for _hypothesis in _hypotheses],
                                              [list(_sample.target) for _sample in samples])

        logging.info(f"{modality} BLEU {_bleu:.2f} on {len(samples)} samples (beam {beam_size}).")

        return _bleu, _hypotheses

    @staticmethod
    @_async_logging_decorator
    async def evaluate_async(model:JointModel, samples:typing.Sequence[TrainingSample], modality:typing.Literal["speech", "text"] = "speech", beam_size:int = 5) -> tuple[float, list[Hypothesis]]:

        _hypotheses = await EvaluationService.translate_dataset_async(model, samples, modality, beam_size)

        _bleu = EvaluationService.corpus_bleu([EvaluationService.strip_special(_hypothesis.tokens) for _hypothesis in _hypotheses],
                                              [list(_sample.target) for _sample in samples])

        return _bleu, _hypotheses

##-------------------start-of-hypothesis-dumps--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def write_hypotheses(path:str, ids:typing.Sequence[str], sequences:typing.Sequence[typing.Sequence[int]]) -> None:

        """

        One line per sample: id, a tab, space-separated token ids.

        """

        if(len(ids) != len(sequences)):
            raise ContractError(f"{len(ids)} ids for {len(sequences)} sequences.")

        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

        with open(path, "w", encoding="utf-8", newline="\n") as _file:
            for _id, _tokens in zip(ids, sequences):
                _file.write(f"{_id}\t{' '.join(map(str, _tokens))}\n")

    @staticmethod
    def read_hypotheses(path:str) -> dict[str, list[int]]:

        _sequences = {}

        with open(path, "r", encoding="utf-8") as _file:

            for _line_number, _line in enumerate(_file, start=1):

                _line = _line.rstrip("\n")

                if(not _line):
                    continue

                if("\t" not in _line):
                    raise ContractError(f"{path}:{_line_number} has no tab separator.")

                _id, _tokens = _line.split("\t", 1)

                if(_id in _sequences):
                    raise ContractError(f"{path}:{_line_number} repeats id {_id}.")

                _sequences[_id] = [int(_token) for _token in _tokens.split()]

        return _sequences

    @staticmethod
    def score_files(hypothesis_path:str, reference_path:str) -> float:

        """

        Corpus BLEU of two dump files, matched by id.

        """

        _hypotheses = EvaluationService.read_hypotheses(hypothesis_path)
        _references = EvaluationService.read_hypotheses(reference_path)

        if(set(_hypotheses) != set(_references)):
            _first = sorted(set(_hypotheses).symmetric_difference(_references))[0]
            raise ContractError(f"Id '{_first}' is not in both {hypothesis_path} and {reference_path}.")

        _ids = sorted(_references)

        return EvaluationService.corpus_bleu([_hypotheses[_id] for _id in _ids], [_references[_id] for _id in _ids])

    @staticmethod
    def reference_dump(samples:typing.Sequence[TrainingSample]) -> tuple[list[str], list[list[int]]]:
        return [_sample.id for _sample in samples], [list(_sample.target) for _sample in samples]
