## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
from dataclasses import replace

import logging

## third-party libraries
import numpy as np
import pytest

## custom modules
from easyst.classes import CorpusSpec, TrainingSample
from easyst.exceptions import ContractError, InvalidEasySTSettingsException
from easyst.services.data_service import DataService
from easyst.util.constants import BOS_ID, EOS_ID, NUM_SPECIAL_TOKENS, PAD_ID

##-------------------start-of-test_generation()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_generation_is_deterministic(corpus_spec):

    _first = DataService.generate_corpus(corpus_spec)
    _second = DataService.generate_corpus(corpus_spec)

    for _split in _first:
        for _a, _b in zip(_first[_split], _second[_split]):
            assert _a.id == _b.id and _a.source == _b.source and _a.target == _b.target
            assert (_a.speech is None and _b.speech is None) or np.array_equal(_a.speech, _b.speech)

def test_splits_have_the_requested_sizes_and_no_repeated_source(corpus, corpus_spec):

    assert [len(corpus[_split]) for _split in ("train", "dev", "test", "text_only")] == [24, 6, 6, 24]

    _sources = [tuple(_sample.source) for _samples in corpus.values() for _sample in _samples]

    assert len(set(_sources)) == len(_sources)
    assert all(corpus_spec.min_len <= len(_source) <= corpus_spec.max_len for _source in _sources)
    assert all(_sample.speech is None for _sample in corpus["text_only"])
    assert all(_sample.speech is not None for _sample in corpus["train"])

def test_targets_follow_the_token_map_and_pair_swap(corpus, corpus_spec):

    _mapping = DataService.token_mapping(corpus_spec)

    assert sorted(_mapping) == list(range(NUM_SPECIAL_TOKENS, corpus_spec.src_vocab_size))
    assert len(set(_mapping.values())) == len(_mapping)

    for _sample in corpus["train"] + corpus["text_only"]:

        _expected = []

        for _start in range(0, len(_sample.source), 2):
            _pair = [_mapping[_token] for _token in _sample.source[_start:_start + 2]]
            _expected.extend(reversed(_pair))

        assert _sample.target == _expected

def test_single_token_sentence_is_only_mapped():

    assert DataService.translate_tokens([5], {5: 9}) == [9]
    assert DataService.translate_tokens([5, 6, 7], {5: 9, 6: 10, 7: 11}) == [10, 9, 11]

def test_noiseless_features_repeat_the_prototypes(corpus_spec):

    _spec = replace(corpus_spec, feature_noise=0.0)
    _codebook = DataService.codebook(_spec)
    _tokens = [4, 8, 8, 11]

    _features = DataService.synthesize_speech_features(_tokens, _spec, 17)

    assert _features.shape[0] == _spec.feature_dim
    assert len(_tokens) * _spec.min_frames_per_token <= _features.shape[1] <= len(_tokens) * _spec.max_frames_per_token

    _rows = [tuple(_codebook[_token]) for _token in _tokens]

    ## every frame is one of the prototypes, in sentence order
    _seen = []
    for _frame in _features.T:
        _row = tuple(_frame)
        assert _row in _rows
        if(not _seen or _seen[-1] != _row):
            _seen.append(_row)

    assert _seen == [_rows[0], _rows[1], _rows[3]]

def test_codebook_depends_only_on_the_seed(corpus_spec):

    assert np.array_equal(DataService.codebook(corpus_spec), DataService.codebook(replace(corpus_spec, train_size=5)))
    assert not np.array_equal(DataService.codebook(corpus_spec), DataService.codebook(replace(corpus_spec, seed=4)))

def test_undersized_target_vocabulary_is_rejected():

    with pytest.raises(InvalidEasySTSettingsException):
        DataService.token_mapping(CorpusSpec(src_vocab_size=20, tgt_vocab_size=10))

##-------------------start-of-test_batches()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_collate_shifts_the_targets(corpus):

    _samples = corpus["train"][:3]
    _batch = DataService.collate(_samples)

    assert np.all(_batch.tgt_in[:, 0] == BOS_ID)

    for _row, _sample in enumerate(_samples):
        _length = len(_sample.target)
        assert list(_batch.tgt_out[_row, :_length + 1]) == _sample.target + [EOS_ID]
        assert np.all(_batch.tgt_out[_row, _length + 1:] == PAD_ID)
        assert _batch.tgt_mask[_row].sum() == _length + 1
        assert _batch.frame_mask[_row].sum() == _sample.num_frames

def test_collate_refuses_mixed_batches(corpus):

    with pytest.raises(ContractError):
        DataService.collate([corpus["train"][0], corpus["text_only"][0]], with_speech=True)

    with pytest.raises(ContractError):
        DataService.collate([])

def test_batcher_places_every_sample_once_within_budget(corpus):

    for _modality, _split, _budget in (("speech", "train", 16), ("text", "text_only", 9)):

        _batches = DataService.batcher(corpus[_split], _budget, [1, 1], _modality)
        _ids = [_id for _batch in _batches for _id in _batch.ids]

        assert sorted(_ids) == sorted(_sample.id for _sample in corpus[_split])

        for _batch in _batches:
            _width = _batch.frames.shape[1] if _modality == "speech" else _batch.src_tokens.shape[1]
            assert len(_batch.ids) * _width <= _budget

def test_tightest_budget_still_batches(corpus):

    _longest = max(_sample.num_frames for _sample in corpus["train"])
    _batches = DataService.batcher(corpus["train"], _longest, 0, "speech")

    assert sum(len(_batch.ids) for _batch in _batches) == len(corpus["train"])

    with pytest.raises(InvalidEasySTSettingsException):
        DataService.batcher(corpus["train"], _longest - 1, 0, "speech")

def test_batch_order_depends_on_the_seed(corpus):

    _order = lambda seed: [_batch.ids[0] for _batch in DataService.batcher(corpus["text_only"], 6, seed, "text")]

    assert _order([1, 2]) == _order([1, 2])
    assert sorted(_order([1, 2])) == sorted(_order([1, 3]))

def test_alternating_scheduler_patterns():

    _pattern = lambda schedule: [_modality[0].upper() + str(_item) for _modality, _item in schedule]

    assert _pattern(DataService.alternating_scheduler([1, 2], [1, 2])) == ["S1", "T1", "S2", "T2"]
    assert _pattern(DataService.alternating_scheduler([1, 2, 3], [1])) == ["S1", "T1", "S2", "T1", "S3", "T1"]
    assert _pattern(DataService.alternating_scheduler([1], [1, 2])) == ["S1", "T1", "S1", "T2"]

    with pytest.raises(ContractError):
        DataService.alternating_scheduler([], [1])

def test_windows_group_consecutive_batches(corpus):

    _batches = DataService.batcher(corpus["text_only"], 6, 0, "text")
    _windows = DataService.windows(_batches, 4)

    assert [len(_window) for _window in _windows[:-1]] == [4] * (len(_windows) - 1)
    assert all(_a is _b for _a, _b in zip([_batch for _window in _windows for _batch in _window], _batches))

##-------------------start-of-test_files()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_corpus_files_round_trip(corpus, corpus_spec, tmp_path):

    DataService.write_corpus(corpus, str(tmp_path))
    _restored = DataService.read_corpus(str(tmp_path), corpus_spec.feature_dim)

    assert sorted(_restored) == sorted(corpus)

    for _split, _samples in corpus.items():
        for _original, _copy in zip(_samples, _restored[_split]):

            assert (_original.id, _original.source, _original.target) == (_copy.id, _copy.source, _copy.target)

            if(_original.speech is None):
                assert _copy.speech is None
            else:
                assert np.array_equal(_copy.speech, _original.speech.astype(np.float32).astype(np.float64))

def test_malformed_manifest_is_reported(tmp_path):

    (tmp_path / "dev.tsv").write_text("dev-000000\ttext\t4 5\n", encoding="utf-8")
    (tmp_path / "dev.f32").write_bytes(b"")

    with pytest.raises(ContractError):
        DataService.read_split(str(tmp_path), "dev", 4)

def test_speech_cost_needs_features():

    with pytest.raises(ContractError):
        DataService.sample_cost(TrainingSample("x", [4], [5]), "speech")

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='test_data.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(pytest.main([__file__, "-q"]))
