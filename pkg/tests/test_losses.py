## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging
import math

## third-party libraries
import numpy as np
import pytest

## custom modules
from easyst.classes import LossWeights
from easyst.engine.gradcheck import grad_check
from easyst.engine.tensor import Graph, Tensor
from easyst.exceptions import DimensionError, VocabularyError
from easyst.losses import car_loss, car_loss_per_sample, kd_loss, nll_loss, reconstruct, similarity_matrix, total_loss
from easyst.model.joint_model import JointModel
from easyst.services.data_service import DataService

from conftest import parameter_check

_rng = np.random.default_rng(11)

##-------------------start-of-similarity()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_self_similarity_has_unit_diagonal():

    _states = Tensor(_rng.normal(size=(5, 4)))

    assert np.allclose(np.diag(similarity_matrix(_states, _states).data), 1.0, atol=1e-12)

def test_orthogonal_columns_have_zero_similarity():

    _speech = Tensor([[1.0], [0.0]])
    _text = Tensor([[0.0], [1.0]])

    assert similarity_matrix(_speech, _text).data[0, 0] == 0.0

def test_similarity_ignores_column_scale():

    _speech = _rng.normal(size=(3, 4))
    _text = _rng.normal(size=(3, 2))

    assert np.allclose(similarity_matrix(Tensor(3.0 * _speech), Tensor(_text)).data, similarity_matrix(Tensor(_speech), Tensor(_text)).data, atol=1e-12)

def test_similarity_rejects_mismatched_widths():

    with pytest.raises(DimensionError):
        similarity_matrix(Tensor(np.ones((3, 2))), Tensor(np.ones((4, 2))))

##-------------------start-of-reconstruct()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_single_speech_column_reconstructs_itself_everywhere():

    _speech = _rng.normal(size=(3, 1))
    _rebuilt = reconstruct(Tensor(_speech), Tensor(_rng.normal(size=(1, 4)))).data

    assert np.allclose(_rebuilt, np.repeat(_speech, 4, axis=1), atol=1e-12)

def test_equal_similarities_average_the_speech_columns():

    _speech = np.array([[1.0, 3.0], [2.0, -2.0]])
    _rebuilt = reconstruct(Tensor(_speech), Tensor(np.zeros((2, 1)))).data

    assert np.allclose(_rebuilt[:, 0], [2.0, 0.0], atol=1e-12)

##-------------------start-of-car()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_car_of_orthogonal_single_columns():

    _value = car_loss(Tensor([[1.0], [0.0]]), Tensor([[0.0], [1.0]])).item()

    assert abs(_value - math.sqrt(2.0)) < 1e-12

def test_car_vanishes_for_identical_encodings():

    _states = _rng.normal(size=(4, 5))

    assert abs(car_loss(Tensor(_states), Tensor(_states.copy())).item()) < 1e-12

def test_car_sends_no_gradient_to_the_text_side():

    _speech = Tensor(_rng.normal(size=(3, 4)), requires_grad=True)
    _text = Tensor(_rng.normal(size=(3, 2)), requires_grad=True)

    with Graph() as _graph:
        _graph.backward(car_loss(_speech, _text))

    assert np.array_equal(_text.grad, np.zeros((3, 2)))
    assert np.any(_speech.grad != 0.0)

@pytest.mark.parametrize("seed", range(20))
def test_car_gradient_matches_finite_differences(seed):

    _instance = np.random.default_rng([seed, 1])
    _width = int(_instance.integers(2, 5))
    _text = _instance.normal(size=(_width, int(_instance.integers(1, 6))))

    assert grad_check(lambda x: car_loss(x, Tensor(_text)), _instance.normal(size=(_width, int(_instance.integers(1, 6)))), eps=1e-5) < 1e-4

def test_car_is_invariant_to_padding():

    _first = (_rng.normal(size=(3, 4)), _rng.normal(size=(3, 2)))
    _second = (_rng.normal(size=(3, 6)), _rng.normal(size=(3, 5)))

    _speech = np.zeros((2, 3, 6))
    _text = np.zeros((2, 3, 5))

    ## garbage in the padded columns must not leak into the real ones
    _speech[0] = _rng.normal(size=(3, 6))
    _text[0] = _rng.normal(size=(3, 5))

    _speech[0, :, :4] = _first[0]
    _text[0, :, :2] = _first[1]
    _speech[1] = _second[0]
    _text[1] = _second[1]

    _speech_mask = np.array([[True] * 4 + [False] * 2, [True] * 6])
    _text_mask = np.array([[True] * 2 + [False] * 3, [True] * 5])

    _batched = car_loss_per_sample(Tensor(_speech), Tensor(_text), _speech_mask, _text_mask).data

    assert abs(_batched[0] - car_loss(Tensor(_first[0]), Tensor(_first[1])).item()) < 1e-10
    assert abs(_batched[1] - car_loss(Tensor(_second[0]), Tensor(_second[1])).item()) < 1e-10

##-------------------start-of-nll()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_uniform_logits_cost_log_vocabulary():

    _targets = np.array([[4, 5, 6]])

    for _smoothing in (0.0, 0.1, 0.3):
        assert abs(nll_loss(Tensor(np.zeros((1, 3, 10))), _targets, _smoothing).item() - math.log(10)) < 1e-12

def test_label_smoothing_matches_explicit_sum():

    _logits = _rng.normal(size=(4, 7))
    _targets = np.array([1, 3, 3, 6])
    _eps = 0.1

    _log_probs = _logits - np.log(np.exp(_logits).sum(axis=-1, keepdims=True))
    _expected = 0.0

    for _row, _target in enumerate(_targets):
        _others = np.delete(_log_probs[_row], _target)
        _expected += -(1.0 - _eps) * _log_probs[_row, _target] - (_eps / 6.0) * _others.sum()

    assert abs(nll_loss(Tensor(_logits), _targets, _eps).item() - _expected / 4) < 1e-12

def test_nll_mask_drops_padding():

    _logits = _rng.normal(size=(1, 5, 6))
    _targets = np.array([[2, 3, 4, 0, 0]])
    _mask = np.array([[True, True, True, False, False]])

    _masked = nll_loss(Tensor(_logits), _targets, 0.1, _mask).item()
    _trimmed = nll_loss(Tensor(_logits[:, :3]), _targets[:, :3], 0.1).item()

    assert abs(_masked - _trimmed) < 1e-12

@pytest.mark.parametrize("seed", range(20))
def test_nll_gradient_matches_finite_differences(seed):

    _instance = np.random.default_rng([seed, 2])
    _vocab = int(_instance.integers(3, 8))
    _targets = _instance.integers(0, _vocab, size=(2, 4))
    _smoothing = float(_instance.uniform(0.0, 0.3))

    ## first row padded after a random length, second row full
    _mask = np.ones((2, 4), dtype=bool)
    _mask[0, int(_instance.integers(1, 5)):] = False

    assert grad_check(lambda x: nll_loss(x, _targets, _smoothing, _mask), _instance.normal(size=(2, 4, _vocab)), eps=1e-5) < 1e-4

def test_nll_rejects_out_of_vocabulary_targets():

    with pytest.raises(VocabularyError):
        nll_loss(Tensor(np.zeros((2, 4))), np.array([1, 4]))

##-------------------start-of-kd()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_kd_with_one_hot_teacher_equals_nll():

    _student = _rng.normal(size=(5, 8))
    _targets = np.array([4, 5, 6, 7, 2])

    _teacher = np.zeros((5, 8))
    _teacher[np.arange(5), _targets] = 80.0

    assert abs(kd_loss(Tensor(_student), Tensor(_teacher)).item() - nll_loss(Tensor(_student), _targets).item()) < 1e-12

def test_kd_matches_explicit_sum():

    _student = _rng.normal(size=(3, 6))
    _teacher = _rng.normal(size=(3, 6))

    _p = np.exp(_teacher) / np.exp(_teacher).sum(axis=-1, keepdims=True)
    _log_q = _student - np.log(np.exp(_student).sum(axis=-1, keepdims=True))

    assert abs(kd_loss(Tensor(_student), Tensor(_teacher)).item() - (-(_p * _log_q).sum() / 3)) < 1e-12

@pytest.mark.parametrize("seed", range(20))
def test_kd_gradient_matches_finite_differences(seed):

    _instance = np.random.default_rng([seed, 3])
    _vocab = int(_instance.integers(3, 8))
    _teacher = Tensor(_instance.normal(scale=2.0, size=(2, 3, _vocab)))

    _mask = np.ones((2, 3), dtype=bool)
    _mask[1, int(_instance.integers(1, 4)):] = False

    assert grad_check(lambda x: kd_loss(x, _teacher, _mask), _instance.normal(size=(2, 3, _vocab)), eps=1e-5) < 1e-4

def test_kd_treats_the_teacher_as_constant():

    _student = Tensor(_rng.normal(size=(2, 5)), requires_grad=True)
    _teacher = Tensor(_rng.normal(size=(2, 5)), requires_grad=True)

    with Graph() as _graph:
        _graph.backward(kd_loss(_student, _teacher))

    assert np.array_equal(_teacher.grad, np.zeros((2, 5)))

##-------------------start-of-total_loss()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_total_loss_combines_its_terms(model_config, corpus):

    _model = JointModel(model_config, "jt-proposed", seed=2)
    _batch = DataService.collate(corpus["train"][:3])

    _breakdown = total_loss(_batch, _model, LossWeights(alpha=0.8, lambda_=0.02, label_smoothing=0.1))
    _terms = _breakdown.as_floats()

    _expected = 0.8 * _terms["nll_st"] + 0.2 * _terms["kd"] + 0.02 * _terms["car"] + _terms["nll_mt"]

    assert abs(_breakdown.total.item() - _expected) < 1e-10
    assert _terms["car"] > 0.0
    assert _breakdown.num_tokens == _batch.num_target_tokens

def test_plain_weights_reduce_to_the_two_nll_terms(model_config, corpus):

    _model = JointModel(model_config, "jt", seed=2)
    _breakdown = total_loss(corpus["train"][0], _model, LossWeights(alpha=1.0, lambda_=0.0, label_smoothing=0.0))

    assert abs(_breakdown.total.item() - (_breakdown.nll_st.item() + _breakdown.nll_mt.item())) < 1e-10

def test_speech_only_model_has_no_auxiliary_terms(model_config, corpus):

    _model = JointModel(model_config, "st", seed=2)
    _breakdown = total_loss(corpus["train"][0], _model, LossWeights())

    assert _breakdown.kd is None and _breakdown.car is None and _breakdown.nll_mt is None
    assert _breakdown.total.item() == _breakdown.nll_st.item()

def test_speech_updates_can_leave_out_the_text_nll(model_config, corpus):

    _model = JointModel(model_config, "jt-s-mt", seed=2)
    _breakdown = total_loss(corpus["train"][0], _model, LossWeights(), include_mt_nll=False)

    assert _breakdown.nll_mt is None
    assert _breakdown.kd is not None

def test_total_loss_is_a_token_weighted_sum_over_samples(model_config, corpus):

    _model = JointModel(model_config, "jt-proposed", seed=4)
    _weights = LossWeights(alpha=0.7, lambda_=0.5, label_smoothing=0.1)
    _samples = corpus["train"][3:5]

    _joint = total_loss(DataService.collate(_samples), _model, _weights)
    _singles = [total_loss(_sample, _model, _weights) for _sample in _samples]

    _expected = sum(_single.total.item() * _single.num_tokens for _single in _singles)

    assert abs(_joint.total.item() * _joint.num_tokens - _expected) < 1e-8

@pytest.mark.parametrize("seed", range(20))
def test_total_loss_gradient_matches_finite_differences(model_config, corpus, seed):

    _instance = np.random.default_rng([seed, 4])
    _model = JointModel(model_config, "jt-proposed", seed=seed)
    _batch = DataService.collate([corpus["train"][_index] for _index in _instance.choice(len(corpus["train"]), size=2, replace=False)])

    _weights = LossWeights(alpha=float(_instance.uniform(0.5, 1.0)), lambda_=float(_instance.uniform(0.0, 0.5)), label_smoothing=0.1)
    _plain = LossWeights(alpha=1.0, lambda_=0.0, label_smoothing=0.1)

    ## speech-only parameters never feed a stopped term
    assert parameter_check(_model, "speech_frontend.proj.bias", lambda: total_loss(_batch, _model, _weights).total) < 1e-3

    ## the shared stack and the decoder also feed the stopped teacher side, checked with KD and CAR off
    for _name in ("shared_encoder.norm.gain", "decoder.norm.bias"):
        assert parameter_check(_model, _name, lambda: total_loss(_batch, _model, _plain).total) < 1e-3

@pytest.mark.parametrize("layout", ["jt", "jt-proposed"])
def test_auxiliary_terms_leave_text_encoder_gradients_alone(model_config, corpus, layout):

    _model = JointModel(model_config, layout, seed=6)
    _batch = DataService.collate(corpus["train"][:3])
    _text_side = [_name for _name in _model.parameter_names() if _name.startswith(("text_embedding", "text_encoder"))]

    def _gradients(weights:LossWeights) -> dict[str, np.ndarray]:

        _model.zero_grad()

        with Graph() as _graph:
            _graph.backward(total_loss(_batch, _model, weights).total)

        return {_name: _model.parameters[_name].grad.copy() for _name in _text_side}

    _full = _gradients(LossWeights(alpha=0.7, lambda_=0.5, label_smoothing=0.1))
    _without_kd_and_car = _gradients(LossWeights(alpha=1.0, lambda_=0.0, label_smoothing=0.1))

    assert _text_side
    assert any(np.any(_gradient != 0.0) for _gradient in _full.values())

    for _name in _text_side:
        assert np.allclose(_full[_name], _without_kd_and_car[_name], rtol=0.0, atol=1e-12), _name

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='test_losses.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(pytest.main([__file__, "-q"]))
