## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging

## third-party libraries
import numpy as np
import pytest

## custom modules
from easyst.engine.tensor import Graph
from easyst.exceptions import InitializationError, InvalidEasySTSettingsException, LengthError, VocabularyError
from easyst.losses import text_loss
from easyst.model.joint_model import JointModel
from easyst.model.schemes import from_checkpoint, init_from_scheme, rollback_rules, sharing_map, tied_parameters, to_checkpoint
from easyst.services.data_service import DataService

##-------------------start-of-test_shapes()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_speech_encoder_halves_the_frame_count(model_config):

    _model = JointModel(model_config, "st", seed=0)

    for _frames in (1, 6, 7):
        _trace = _model.encode_speech(np.ones((model_config.speech_feature_dim, _frames)))
        assert _trace.encoder_output.shape == (model_config.d_model, (_frames + 1) // 2)

def test_decode_returns_one_row_per_target(model_config):

    _model = JointModel(model_config, "mt", seed=0)
    _trace = _model.decode(_model.encode_text([4, 5, 6]).encoder_output, [7, 8])

    assert _trace.logits.shape == (2, model_config.tgt_vocab_size)
    assert len(_trace.decoder_states) == model_config.n_decoder_layers
    assert _trace.decoder_states[0].shape == (2, model_config.d_model)

def test_transcription_model_predicts_source_tokens(model_config):

    assert JointModel(model_config, "asr").output_vocab_size == model_config.src_vocab_size
    assert JointModel(model_config, "jt").output_vocab_size == model_config.tgt_vocab_size

def test_unknown_layout_is_rejected(model_config):

    with pytest.raises(InvalidEasySTSettingsException):
        JointModel(model_config, "cascade")

def test_input_contracts(model_config):

    _model = JointModel(model_config, "mt", seed=0)

    with pytest.raises(VocabularyError):
        _model.encode_text([4, model_config.src_vocab_size])

    with pytest.raises(LengthError):
        _model.encode_text([4] * (model_config.max_positions + 1))

##-------------------start-of-test_decoder_behaviour()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_decoder_is_causal(model_config):

    _model = JointModel(model_config, "mt", seed=1)
    _memory = _model.encode_text([4, 9, 6, 5]).encoder_output

    _first = _model.decode(_memory, [5, 6, 7, 8, 9]).logits.data
    _second = _model.decode(_memory, [5, 6, 11, 8, 9]).logits.data

    ## targets[2] is read from position 3 onward
    assert np.allclose(_first[:3], _second[:3], atol=1e-12)
    assert not np.allclose(_first[3:], _second[3:])

def test_eval_mode_is_deterministic_and_training_mode_is_not(model_config):

    _model = JointModel(model_config, "mt", seed=1)

    _eval = [_model.decode(_model.encode_text([4, 5, 6]).encoder_output, [7, 8, 9]).logits.data for _ in range(2)]
    _train = [_model.decode(_model.encode_text([4, 5, 6], rng=np.random.default_rng(_seed)).encoder_output, [7, 8, 9], rng=np.random.default_rng(_seed)).logits.data for _seed in (0, 1)]

    assert np.array_equal(_eval[0], _eval[1])
    assert not np.allclose(_train[0], _train[1])

##-------------------start-of-test_sharing()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_sharing_map_follows_the_layout(model_config):

    _components = lambda layout: {_component for _, _component in sharing_map(JointModel(model_config, layout))}

    assert _components("jt-proposed") == {"shared_encoder", "decoder", "output_projection"}
    assert _components("jt") == {"decoder", "output_projection"}
    assert tied_parameters(JointModel(model_config, "st")) == []
    assert tied_parameters(JointModel(model_config, "mt")) == []

def test_shared_encoder_receives_text_gradients_only_when_shared(model_config, corpus):

    _batch = DataService.collate(corpus["text_only"][:2])

    for _layout, _expect_gradient in (("jt-s-mt", True), ("jt", False)):

        _model = JointModel(model_config, _layout, seed=3)

        with Graph() as _graph:
            _graph.backward(text_loss(_batch, _model, 0.1).total)

        _grad = _model.parameters["shared_encoder.0.ffn.w1"].grad
        _touched = _grad is not None and bool(np.any(_grad != 0.0))

        assert _touched == _expect_gradient

##-------------------start-of-test_initialization()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def _pretrained(model_config):

    _asr = to_checkpoint(JointModel(model_config, "asr", seed=11))
    _mt = to_checkpoint(JointModel(model_config, "mt", seed=12))

    return _asr, _mt

def test_shared_scheme_reproduces_the_text_model(model_config):

    _asr, _mt = _pretrained(model_config)
    _mt_model = from_checkpoint(_mt)

    for _scheme in ("jt-s-mt", "jt-proposed", "jt"):

        _joint = init_from_scheme(_scheme, _asr, _mt, model_config, seed=0)

        _expected = _mt_model.decode(_mt_model.encode_text([4, 7, 5]).encoder_output, [6, 9]).logits.data
        _actual = _joint.decode(_joint.encode_text([4, 7, 5]).encoder_output, [6, 9]).logits.data

        assert np.allclose(_actual, _expected, atol=1e-12)

def test_speech_modules_come_from_the_transcription_model(model_config):

    _asr, _mt = _pretrained(model_config)
    _joint = init_from_scheme("st", _asr, _mt, model_config)

    for _name in ("speech_frontend.proj.weight", "speech_encoder.0.ffn.w1", "shared_encoder.norm.gain"):
        assert np.array_equal(_joint.parameters[_name].data, _asr.tensors[_name].astype(np.float64))

    assert np.array_equal(_joint.parameters["decoder.0.ffn.w1"].data, _mt.tensors["decoder.0.ffn.w1"].astype(np.float64))

def test_missing_source_checkpoint_is_an_initialization_error(model_config):

    _asr, _ = _pretrained(model_config)

    with pytest.raises(InitializationError):
        init_from_scheme("jt-s-mt", _asr, None, model_config)

    with pytest.raises(InitializationError):
        init_from_scheme("cascade", _asr, None, model_config)

def test_rollback_rules_cover_single_task_layouts():

    assert ("decoder", "mt", "decoder") in rollback_rules("mt")
    assert ("shared_encoder", "mt", "text_encoder") in rollback_rules("jt-proposed")

def test_checkpoint_conversion_keeps_the_architecture(model_config):

    _model = JointModel(model_config, "jt-proposed", seed=6)
    _checkpoint = to_checkpoint(_model, epoch=3)

    _restored = from_checkpoint(_checkpoint)

    assert _restored.layout == "jt-proposed"
    assert _restored.config == model_config
    assert _checkpoint.metadata["epoch"] == 3
    assert all(_value.dtype == np.float32 for _value in _checkpoint.tensors.values())

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='test_model.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(pytest.main([__file__, "-q"]))
