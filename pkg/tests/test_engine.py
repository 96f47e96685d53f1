## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import logging

## third-party libraries
import numpy as np
import pytest

## custom modules
from easyst.engine import ops
from easyst.engine.gradcheck import grad_check
from easyst.engine.tensor import Graph, Tensor
from easyst.exceptions import ContractError, DimensionError, GraphError

##-------------------start-of-helpers()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

_rng = np.random.default_rng(7)

def _point(*shape:int) -> np.ndarray:
    return _rng.normal(size=shape)

##-------------------start-of-test_elementwise_gradients()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_elementwise_gradients():

    _other = _point(3, 4)

    assert grad_check(lambda x: ops.sum(ops.mul(x, _other)), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.div(_other, ops.add(ops.mul(x, x), 1.0))), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.exp(ops.scale(x, 0.5))), _point(2, 5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.log(ops.add(ops.mul(x, x), 1.0))), _point(5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.sqrt(ops.add(ops.mul(x, x), 0.5))), _point(4)) < 1e-4

def test_broadcast_gradients():

    ## a row vector added to every row
    _matrix = _point(4, 3)

    assert grad_check(lambda x: ops.sum(ops.mul(ops.add(_matrix, x), ops.add(_matrix, x))), _point(1, 3)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.sub(x, _matrix), 2.0)), _point(3)) < 1e-4

def test_matmul_and_shape_gradients():

    _right = _point(4, 2)
    _batched = _point(2, 4, 3)

    assert grad_check(lambda x: ops.sum(ops.matmul(x, _right)), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.matmul(_batched, x), ops.matmul(_batched, x))), _point(3, 5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.transpose(x), _point(4, 3))), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.reshape(x, (6, 2)), _point(6, 2))), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.getitem(x, (slice(None), 1)), _point(3))), _point(3, 4)) < 1e-4

def test_forward_values():

    assert np.array_equal(ops.matmul(np.eye(2), np.array([[3.0, 4.0], [5.0, 6.0]])).data, [[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(ops.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]])).data, [[17.0], [39.0]])

    with pytest.raises(DimensionError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))

    assert np.allclose(ops.softmax_cols(np.zeros((3, 2))).data, 1.0 / 3.0)
    assert np.allclose(ops.softmax_cols(np.array([[0.0], [np.log(3.0)]])).data, [[0.25], [0.75]], atol=1e-12)

    _scores = _point(4, 3)
    _shifted = _scores.copy()
    _shifted[:, 1] += 40.0

    assert np.allclose(ops.softmax_cols(_scores).data, ops.softmax_cols(_shifted).data, atol=1e-12)
    assert np.allclose(ops.softmax_cols(_scores).data.sum(axis=0), 1.0, atol=1e-12)

def test_normalization_gradients():

    _weights = _point(3, 5)

    assert grad_check(lambda x: ops.sum(ops.mul(ops.softmax(x, axis=-1), _weights)), _point(3, 5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.log_softmax(x, axis=-1), _weights)), _point(3, 5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.softmax_cols(x), _weights)), _point(3, 5)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.mul(ops.mean(x, axis=0), _point(5))), _point(3, 5)) < 1e-4

    _gain = _point(5)
    _bias = _point(5)

    assert grad_check(lambda x: ops.sum(ops.mul(ops.layer_norm(x, _gain, _bias), _weights)), _point(3, 5), eps=1e-5) < 1e-3

def test_gather_and_take_last_gradients():

    _ids = np.array([[0, 2], [2, 1]])
    _targets = np.array([[1, 0], [3, 3]])

    assert grad_check(lambda x: ops.sum(ops.mul(ops.gather(x, _ids), _point(2, 2, 4))), _point(3, 4)) < 1e-4
    assert grad_check(lambda x: ops.sum(ops.take_last(ops.log_softmax(x, axis=-1), _targets)), _point(2, 2, 4)) < 1e-4

##-------------------start-of-test_graph_contract()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def test_backward_runs_once():

    _x = Tensor([1.0, 2.0], requires_grad=True)

    with Graph() as _graph:
        _loss = ops.sum(ops.mul(_x, _x))
        _graph.backward(_loss)

        with pytest.raises(GraphError):
            _graph.backward(_loss)

    assert np.allclose(_x.grad, [2.0, 4.0])

def test_backward_needs_a_scalar():

    _x = Tensor([1.0, 2.0], requires_grad=True)

    with Graph() as _graph:
        with pytest.raises(ContractError):
            _graph.backward(ops.mul(_x, 3.0))

def test_gradients_accumulate_across_graphs():

    _x = Tensor([3.0], requires_grad=True)

    for _ in range(2):
        with Graph() as _graph:
            _graph.backward(ops.sum(ops.scale(_x, 2.0)))

    assert np.allclose(_x.grad, [4.0])

def test_stop_gradient_blocks_the_path():

    _x = Tensor([1.5, -0.5], requires_grad=True)

    with Graph() as _graph:
        _loss = ops.sum(ops.mul(ops.stop_gradient(_x), ops.stop_gradient(_x)))
        _graph.register(_x)
        _graph.backward(_loss)

    assert _x.grad is not None
    assert np.array_equal(_x.grad, np.zeros(2))

def test_off_path_participants_get_zero_gradient():

    _used = Tensor([1.0], requires_grad=True)
    _unused = Tensor([2.0], requires_grad=True)

    with Graph() as _graph:
        _side = ops.mul(_unused, 5.0)
        _graph.backward(ops.sum(ops.mul(_used, 2.0)))

    assert np.allclose(_used.grad, [2.0])
    assert np.array_equal(_unused.grad, np.zeros(1))
    assert _side.shape == (1,)

def test_sqrt_gradient_is_finite_at_zero():

    _x = Tensor([0.0, 4.0], requires_grad=True)

    with Graph() as _graph:
        _graph.backward(ops.sum(ops.sqrt(_x)))

    assert np.all(np.isfinite(_x.grad))
    assert np.isclose(_x.grad[1], 0.25)

def test_no_graph_means_no_recording():

    _x = Tensor([1.0], requires_grad=True)
    _y = ops.mul(_x, 2.0)

    assert not _y.requires_grad

def test_grad_check_rejects_bad_steps():

    with pytest.raises(ContractError):
        grad_check(lambda x: ops.sum(x), np.ones(2), eps=1e-2)

def test_dropout_is_identity_in_eval_mode():

    _x = _point(4, 4)

    assert np.array_equal(ops.dropout(Tensor(_x), 0.5, None).data, _x)

    _dropped = ops.dropout(Tensor(np.ones((200, 50))), 0.5, np.random.default_rng(0)).data

    ## survivors are rescaled by 1 / (1 - rate)
    assert set(np.unique(_dropped)) <= {0.0, 2.0}

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='test_engine.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(pytest.main([__file__, "-q"]))
