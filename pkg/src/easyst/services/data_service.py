## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging
import os
import typing

## third-party libraries
import numpy as np

## custom modules
from ..classes import Batch, CorpusSpec, TrainingSample
from ..decorators import _sync_logging_decorator
from ..exceptions import ContractError, InvalidEasySTSettingsException
from ..util.constants import BOS_ID, EOS_ID, NUM_SPECIAL_TOKENS, PAD_ID

T = typing.TypeVar("T")

## order matters, it feeds the per-sample seeds
CORPUS_SPLITS = ["train", "dev", "test", "text_only"]

class DataService:

    """

    Synthetic paired-modality corpus: generation, manifest files, padded batches and the modality scheduler.

    """

    _log_directory:str | None = None

    _max_sentence_attempts:int = 50

##-------------------start-of-set_attributes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def _set_attributes(log_directory:str | None = None) -> None:

        DataService._log_directory = log_directory

##-------------------start-of-codebook()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def codebook(spec:CorpusSpec) -> np.ndarray:

        """

        The frozen per-token prototype vectors, src_vocab_size x feature_dim. Independent of any model embedding.

        """

        return np.random.default_rng([spec.seed, 0]).normal(0.0, 1.0, size=(spec.src_vocab_size, spec.feature_dim))

##-------------------start-of-token_mapping()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def token_mapping(spec:CorpusSpec) -> dict[int, int]:

        """

        The fixed random one-to-one map from real source ids to real target ids.

        """

        _source_ids = list(range(NUM_SPECIAL_TOKENS, spec.src_vocab_size))
        _target_ids = np.arange(NUM_SPECIAL_TOKENS, spec.tgt_vocab_size)

        if(len(_target_ids) < len(_source_ids)):
            raise InvalidEasySTSettingsException(f"tgt_vocab_size ({spec.tgt_vocab_size}) is too small for a one-to-one map of {len(_source_ids)} source tokens.")

        _images = np.random.default_rng([spec.seed, 1]).permutation(_target_ids)[:len(_source_ids)]

        return {_source: int(_target) for _source, _target in zip(_source_ids, _images)}

##-------------------start-of-translate_tokens()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def translate_tokens(source:typing.Sequence[int], mapping:typing.Mapping[int, int]) -> list[int]:

        """

        Maps every token, then swaps each adjacent pair (0,1), (2,3), ... A trailing odd token stays put.

        """

        _mapped = [mapping[int(_token)] for _token in source]

        for _index in range(0, len(_mapped) - 1, 2):
            _mapped[_index], _mapped[_index + 1] = _mapped[_index + 1], _mapped[_index]

        return _mapped

##-------------------start-of-synthesize_speech_features()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def synthesize_speech_features(tokens:typing.Sequence[int],
                                   spec:CorpusSpec,
                                   sample_seed:int | typing.Sequence[int],
                                   codebook:np.ndarray | None = None) -> np.ndarray:

        """

        Renders each token as r consecutive noisy copies of its prototype, r drawn from [min_frames_per_token, max_frames_per_token].

        Parameters:
        tokens (sequence of int) : Source token ids.
        spec (CorpusSpec) : Frame rates, noise and feature size.
        sample_seed (int or sequence of int) : Seeds this sample's own frame-count and noise stream.
        codebook (np.ndarray or None) : Prototypes, DataService.codebook(spec) when None.

        Returns:
        (np.ndarray) : feature_dim x N, N the total frame count.

        """

        _codebook = DataService.codebook(spec) if codebook is None else codebook
        _rng = np.random.default_rng(sample_seed)

        _repeats = _rng.integers(spec.min_frames_per_token, spec.max_frames_per_token + 1, size=len(tokens))
        _frames = np.repeat(_codebook[np.asarray(tokens, dtype=np.int64)], _repeats, axis=0)

        if(spec.feature_noise > 0.0):
            _frames = _frames + _rng.normal(0.0, spec.feature_noise, size=_frames.shape)

        return _frames.T.copy()

##-------------------start-of-generate_corpus()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    @_sync_logging_decorator
    def generate_corpus(spec:CorpusSpec) -> dict[str, list[TrainingSample]]:

        """

        Generates the train, dev and test triplets plus the text-only pool. No source sentence occurs twice.

        Parameters:
        spec (CorpusSpec) : The corpus parameters, seed included.

        Returns:
        (dict) : Split name -> samples. text_only samples carry no speech.

        """

        _mapping = DataService.token_mapping(spec)
        _codebook = DataService.codebook(spec)
        _rng = np.random.default_rng([spec.seed, 2])

        _sizes = {"train": spec.train_size, "dev": spec.dev_size, "test": spec.test_size, "text_only": spec.text_only_size}
        _wanted = sum(_sizes.values())

        _seen:set[tuple[int, ...]] = set()
        _sentences:list[list[int]] = []
        _attempts = 0

        while(len(_sentences) < _wanted):

            _length = int(_rng.integers(spec.min_len, spec.max_len + 1))
            _sentence = tuple(int(_token) for _token in _rng.integers(NUM_SPECIAL_TOKENS, spec.src_vocab_size, size=_length))

            if(_sentence in _seen):
                _attempts += 1
                if(_attempts > DataService._max_sentence_attempts * max(_wanted, 1)):
                    raise InvalidEasySTSettingsException(f"Could not draw {_wanted} distinct sentences; widen the vocabulary or the length range.")
                continue

            _seen.add(_sentence)
            _sentences.append(list(_sentence))

        _corpus:dict[str, list[TrainingSample]] = {}
        _offset = 0

        for _split_index, _split in enumerate(CORPUS_SPLITS):

            _samples = []

            for _index, _source in enumerate(_sentences[_offset:_offset + _sizes[_split]]):

                _speech = None

                if(_split != "text_only"):
                    _speech = DataService.synthesize_speech_features(_source, spec, [spec.seed, 3, _split_index, _index], _codebook)

                _samples.append(TrainingSample(id=f"{_split}-{_index:06d}",
                                               source=_source,
                                               target=DataService.translate_tokens(_source, _mapping),
                                               speech=_speech))

            _corpus[_split] = _samples
            _offset += _sizes[_split]

        logging.info(f"Generated corpus: {', '.join(f'{_split}={len(_samples)}' for _split, _samples in _corpus.items())}.")

        return _corpus

##-------------------start-of-write_corpus()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def write_corpus(corpus:typing.Mapping[str, list[TrainingSample]], directory:str) -> None:

        """

        Writes <split>.tsv manifests and <split>.f32 feature files.

        Manifest columns: id, modality, source ids, target ids, feature byte offset, frame count. Text rows use "-" for the last two.
        Feature files hold little-endian float32 frames, each frame feature_dim values, concatenated in manifest order.

        """

        os.makedirs(directory, exist_ok=True)

        for _split, _samples in corpus.items():

            _offset = 0

            with open(os.path.join(directory, f"{_split}.tsv"), "w", encoding="utf-8", newline="\n") as _manifest, \
                 open(os.path.join(directory, f"{_split}.f32"), "wb") as _features:

                for _sample in _samples:

                    _source = " ".join(map(str, _sample.source))
                    _target = " ".join(map(str, _sample.target))

                    if(_sample.speech is None):
                        _manifest.write(f"{_sample.id}\ttext\t{_source}\t{_target}\t-\t-\n")
                        continue

                    _payload = np.ascontiguousarray(_sample.speech.T, dtype="<f4").tobytes()
                    _features.write(_payload)

                    _manifest.write(f"{_sample.id}\tspeech\t{_source}\t{_target}\t{_offset}\t{_sample.num_frames}\n")
                    _offset += len(_payload)

##-------------------start-of-read_corpus()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def read_split(directory:str, split:str, feature_dim:int) -> list[TrainingSample]:

        _manifest_path = os.path.join(directory, f"{split}.tsv")

        if(not os.path.exists(_manifest_path)):
            raise ContractError(f"No manifest for split '{split}' in {directory}.")

        _features = np.fromfile(os.path.join(directory, f"{split}.f32"), dtype="<f4")

        _samples = []

        with open(_manifest_path, "r", encoding="utf-8") as _manifest:

            for _line_number, _line in enumerate(_manifest, start=1):

                _fields = _line.rstrip("\n").split("\t")

                if(len(_fields) != 6):
                    raise ContractError(f"{_manifest_path}:{_line_number} has {len(_fields)} fields, expected 6.")

                _id, _modality, _source, _target, _offset, _frames = _fields

                _speech = None

                if(_modality == "speech"):
                    _start = int(_offset) // 4
                    _count = int(_frames) * feature_dim
                    _block = _features[_start:_start + _count]

                    if(_block.size != _count):
                        raise ContractError(f"{_manifest_path}:{_line_number} points past the end of the feature file.")

                    _speech = _block.astype(np.float64).reshape(int(_frames), feature_dim).T.copy()

                _samples.append(TrainingSample(id=_id,
                                               source=[int(_token) for _token in _source.split()],
                                               target=[int(_token) for _token in _target.split()],
                                               speech=_speech))

        return _samples

    @staticmethod
    def read_corpus(directory:str, feature_dim:int) -> dict[str, list[TrainingSample]]:

        return {_split: DataService.read_split(directory, _split, feature_dim) for _split in CORPUS_SPLITS if os.path.exists(os.path.join(directory, f"{_split}.tsv"))}

##-------------------start-of-collate()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def collate(samples:typing.Sequence[TrainingSample], with_speech:bool | None = None) -> Batch:

        """

        Pads samples into a Batch. Decoder input is [bos] + target, decoder output target + [eos].

        Parameters:
        samples (sequence of TrainingSample) : At least one sample.
        with_speech (bool or None) : Whether to pack features, by default when every sample has them.

        """

        if(not samples):
            raise ContractError("Cannot collate an empty batch.")

        if(with_speech is None):
            with_speech = all(_sample.speech is not None for _sample in samples)

        _size = len(samples)
        _source_len = max(len(_sample.source) for _sample in samples)
        _target_len = max(len(_sample.target) for _sample in samples) + 1

        _src = np.full((_size, _source_len), PAD_ID, dtype=np.int64)
        _tgt_in = np.full((_size, _target_len), PAD_ID, dtype=np.int64)
        _tgt_out = np.full((_size, _target_len), PAD_ID, dtype=np.int64)

        for _row, _sample in enumerate(samples):
            _src[_row, :len(_sample.source)] = _sample.source
            _tgt_in[_row, :len(_sample.target) + 1] = [BOS_ID] + list(_sample.target)
            _tgt_out[_row, :len(_sample.target) + 1] = list(_sample.target) + [EOS_ID]

        _frames = None
        _frame_mask = None

        if(with_speech):

            if(any(_sample.speech is None for _sample in samples)):
                raise ContractError("A speech batch cannot hold text-only samples.")

            _frame_len = max(_sample.num_frames for _sample in samples)
            _dim = samples[0].speech.shape[0]

            _frames = np.zeros((_size, _frame_len, _dim))
            _frame_mask = np.zeros((_size, _frame_len), dtype=bool)

            for _row, _sample in enumerate(samples):
                _frames[_row, :_sample.num_frames] = _sample.speech.T
                _frame_mask[_row, :_sample.num_frames] = True

        return Batch(ids=[_sample.id for _sample in samples],
                     src_tokens=_src,
                     src_mask=_src != PAD_ID,
                     tgt_in=_tgt_in,
                     tgt_out=_tgt_out,
                     tgt_mask=_tgt_in != PAD_ID,
                     frames=_frames,
                     frame_mask=_frame_mask)

##-------------------start-of-batcher()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def sample_cost(sample:TrainingSample, modality:typing.Literal["speech", "text"]) -> int:

        """

        Frames for speech batches, source tokens for text batches.

        """

        if(modality == "speech"):
            if(sample.speech is None):
                raise ContractError(f"Sample {sample.id} has no speech for a speech batch.")
            return sample.num_frames

        return len(sample.source)

    @staticmethod
    def batcher(dataset:typing.Sequence[TrainingSample],
                max_tokens:int,
                seed:int | typing.Sequence[int],
                modality:typing.Literal["speech", "text"] = "speech") -> list[Batch]:

        """

        Length-bucketed padded batches whose cost (batch size x longest member) stays within max_tokens.

        Samples are sorted by cost, chunked greedily, and the batch order is shuffled by seed. Every sample lands in exactly one batch.

        Parameters:
        dataset (sequence of TrainingSample) : The samples.
        max_tokens (int) : The per-batch frame (speech) or token (text) budget.
        seed (int or sequence of int) : Shuffle seed, typically (run seed, epoch).
        modality (literal["speech", "text"]) : Which budget and input to use.

        Returns:
        (list of Batch) : One epoch of batches.

        """

        if(not dataset):
            return []

        _costs = [DataService.sample_cost(_sample, modality) for _sample in dataset]

        _longest = max(_costs)

        if(_longest > max_tokens):
            raise InvalidEasySTSettingsException(f"A {modality} sample costs {_longest}, over the budget of {max_tokens}.")

        _order = sorted(range(len(dataset)), key=lambda _index: (_costs[_index], dataset[_index].id))

        _chunks:list[list[int]] = []
        _current:list[int] = []
        _current_max = 0

        for _index in _order:

            _candidate_max = max(_current_max, _costs[_index])

            if(_current and (len(_current) + 1) * _candidate_max > max_tokens):
                _chunks.append(_current)
                _current, _candidate_max = [], _costs[_index]

            _current.append(_index)
            _current_max = _candidate_max

        if(_current):
            _chunks.append(_current)

        _shuffled = np.random.default_rng(seed).permutation(len(_chunks))

        return [DataService.collate([dataset[_index] for _index in _chunks[_position]], with_speech=(modality == "speech")) for _position in _shuffled]

##-------------------start-of-alternating_scheduler()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def alternating_scheduler(speech_items:typing.Sequence[T], text_items:typing.Sequence[T]) -> list[tuple[str, T]]:

        """

        Strictly alternates speech and text, starting with speech. The shorter stream cycles until the longer one is used up.

        Returns:
        (list) : ("speech" | "text", item) pairs.

        """

        if(not speech_items or not text_items):
            raise ContractError("alternating_scheduler needs two non-empty streams.")

        _schedule = []

        for _step in range(max(len(speech_items), len(text_items))):
            _schedule.append(("speech", speech_items[_step % len(speech_items)]))
            _schedule.append(("text", text_items[_step % len(text_items)]))

        return _schedule

##-------------------start-of-windows()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

    @staticmethod
    def windows(batches:typing.Sequence[Batch], size:int) -> list[list[Batch]]:

        """

        Groups consecutive batches into accumulation windows of up to size batches.

        """

        return [list(batches[_start:_start + size]) for _start in range(0, len(batches), size)]
