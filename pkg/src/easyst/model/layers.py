## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## built-in libraries
import math

## third-party libraries
import numpy as np

## custom modules
from ..engine import ops
from ..engine.tensor import Tensor
from ..util.constants import MASK_BIAS

Parameters = dict[str, Tensor]

##-------------------start-of-initializers--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def xavier(rng:np.random.Generator, fan_in:int, fan_out:int) -> np.ndarray:

    _limit = math.sqrt(6.0 / (fan_in + fan_out))

    return rng.uniform(-_limit, _limit, size=(fan_in, fan_out))

def add_linear(params:Parameters, prefix:str, fan_in:int, fan_out:int, rng:np.random.Generator, weight:str = "weight", bias:str = "bias") -> None:

    params[f"{prefix}.{weight}"] = Tensor(xavier(rng, fan_in, fan_out), requires_grad=True, name=f"{prefix}.{weight}")
    params[f"{prefix}.{bias}"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{prefix}.{bias}")

def add_norm(params:Parameters, prefix:str, width:int) -> None:

    params[f"{prefix}.gain"] = Tensor(np.ones(width), requires_grad=True, name=f"{prefix}.gain")
    params[f"{prefix}.bias"] = Tensor(np.zeros(width), requires_grad=True, name=f"{prefix}.bias")

def add_embedding(params:Parameters, name:str, vocab_size:int, width:int, rng:np.random.Generator) -> None:

    params[name] = Tensor(rng.normal(0.0, width ** -0.5, size=(vocab_size, width)), requires_grad=True, name=name)

def add_attention(params:Parameters, prefix:str, width:int, rng:np.random.Generator) -> None:

    for _projection in ("q", "k", "v", "o"):
        add_linear(params, prefix, width, width, rng, weight=f"w{_projection}", bias=f"b{_projection}")

def add_ffn(params:Parameters, prefix:str, width:int, hidden:int, rng:np.random.Generator) -> None:

    add_linear(params, prefix, width, hidden, rng, weight="w1", bias="b1")
    add_linear(params, prefix, hidden, width, rng, weight="w2", bias="b2")

def add_encoder_layer(params:Parameters, prefix:str, width:int, hidden:int, rng:np.random.Generator) -> None:

    add_norm(params, f"{prefix}.self_attn_norm", width)
    add_attention(params, f"{prefix}.self_attn", width, rng)
    add_norm(params, f"{prefix}.ffn_norm", width)
    add_ffn(params, f"{prefix}.ffn", width, hidden, rng)

def add_decoder_layer(params:Parameters, prefix:str, width:int, hidden:int, rng:np.random.Generator) -> None:

    add_norm(params, f"{prefix}.self_attn_norm", width)
    add_attention(params, f"{prefix}.self_attn", width, rng)
    add_norm(params, f"{prefix}.cross_attn_norm", width)
    add_attention(params, f"{prefix}.cross_attn", width, rng)
    add_norm(params, f"{prefix}.ffn_norm", width)
    add_ffn(params, f"{prefix}.ffn", width, hidden, rng)

##-------------------start-of-masks--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def sinusoidal_positions(length:int, width:int) -> np.ndarray:

    """

    Fixed sine/cosine position table of shape length x width.

    """

    _positions = np.arange(length, dtype=np.float64)[:, None]
    _rates = np.exp(-math.log(10000.0) * (np.arange(0, width, 2, dtype=np.float64) / width))

    _table = np.zeros((length, width))
    _table[:, 0::2] = np.sin(_positions * _rates)
    _table[:, 1::2] = np.cos(_positions * _rates[: width // 2])

    return _table

def key_padding_bias(mask:np.ndarray) -> np.ndarray:

    """

    B x T boolean mask -> B x 1 x 1 x T additive bias, MASK_BIAS at padding.

    """

    return np.where(mask, 0.0, MASK_BIAS)[:, None, None, :]

def causal_bias(length:int) -> np.ndarray:

    return np.triu(np.full((length, length), MASK_BIAS), k=1)[None, None, :, :]

##-------------------start-of-blocks--------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def linear(x:Tensor, weight:Tensor, bias:Tensor) -> Tensor:
    return ops.add(ops.matmul(x, weight), bias)

def layer_norm(params:Parameters, prefix:str, x:Tensor) -> Tensor:
    return ops.layer_norm(x, params[f"{prefix}.gain"], params[f"{prefix}.bias"])

def multi_head_attention(params:Parameters,
                         prefix:str,
                         query:Tensor,
                         memory:Tensor,
                         bias:np.ndarray,
                         n_heads:int) -> Tensor:

    """

    Scaled dot-product attention over n_heads heads.

    Parameters:
    params (dict) : The model parameters.
    prefix (string) : Name prefix of the attention block, e.g. "decoder.0.cross_attn".
    query (Tensor) : B x Tq x d.
    memory (Tensor) : B x Tk x d.
    bias (np.ndarray) : Additive bias broadcastable to B x heads x Tq x Tk.
    n_heads (int) : The number of heads.

    Returns:
    (Tensor) : B x Tq x d.

    """

    _batch, _query_len, _width = query.shape
    _memory_len = memory.shape[1]
    _head_dim = _width // n_heads

    def _split(x:Tensor, length:int) -> Tensor:
        return ops.transpose(ops.reshape(x, (_batch, length, n_heads, _head_dim)), (0, 2, 1, 3))

    _queries = _split(linear(query, params[f"{prefix}.wq"], params[f"{prefix}.bq"]), _query_len)
    _keys = _split(linear(memory, params[f"{prefix}.wk"], params[f"{prefix}.bk"]), _memory_len)
    _values = _split(linear(memory, params[f"{prefix}.wv"], params[f"{prefix}.bv"]), _memory_len)

    _scores = ops.add(ops.scale(ops.matmul(_queries, ops.transpose(_keys)), 1.0 / math.sqrt(_head_dim)), bias)
    _weights = ops.softmax(_scores, axis=-1)

    _context = ops.reshape(ops.transpose(ops.matmul(_weights, _values), (0, 2, 1, 3)), (_batch, _query_len, _width))

    return linear(_context, params[f"{prefix}.wo"], params[f"{prefix}.bo"])

def feed_forward(params:Parameters, prefix:str, x:Tensor) -> Tensor:

    _hidden = ops.relu(linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))

    return linear(_hidden, params[f"{prefix}.w2"], params[f"{prefix}.b2"])

def encoder_layer(params:Parameters,
                  prefix:str,
                  x:Tensor,
                  self_bias:np.ndarray,
                  n_heads:int,
                  dropout:float,
                  rng:np.random.Generator | None) -> Tensor:

    """

    Pre-norm encoder layer: x + Attn(LN(x)), then + FFN(LN(.)).

    """

    _normed = layer_norm(params, f"{prefix}.self_attn_norm", x)
    x = ops.add(x, ops.dropout(multi_head_attention(params, f"{prefix}.self_attn", _normed, _normed, self_bias, n_heads), dropout, rng))

    _normed = layer_norm(params, f"{prefix}.ffn_norm", x)

    return ops.add(x, ops.dropout(feed_forward(params, f"{prefix}.ffn", _normed), dropout, rng))

def decoder_layer(params:Parameters,
                  prefix:str,
                  x:Tensor,
                  memory:Tensor,
                  self_bias:np.ndarray,
                  memory_bias:np.ndarray,
                  n_heads:int,
                  dropout:float,
                  rng:np.random.Generator | None) -> Tensor:

    _normed = layer_norm(params, f"{prefix}.self_attn_norm", x)
    x = ops.add(x, ops.dropout(multi_head_attention(params, f"{prefix}.self_attn", _normed, _normed, self_bias, n_heads), dropout, rng))

    _normed = layer_norm(params, f"{prefix}.cross_attn_norm", x)
    x = ops.add(x, ops.dropout(multi_head_attention(params, f"{prefix}.cross_attn", _normed, memory, memory_bias, n_heads), dropout, rng))

    _normed = layer_norm(params, f"{prefix}.ffn_norm", x)

    return ops.add(x, ops.dropout(feed_forward(params, f"{prefix}.ffn", _normed), dropout, rng))

##-------------------start-of-subsample_frames()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def subsample_frames(frames:np.ndarray, mask:np.ndarray) -> tuple[np.ndarray, np.ndarray]:

    """

    Averages each pair of consecutive real frames (stride 2). A trailing odd frame stands alone.

    Parameters:
    frames (np.ndarray) : B x N x d_s features, zero at padding.
    mask (np.ndarray) : B x N, True at real frames.

    Returns:
    (np.ndarray) : B x ceil(N/2) x d_s averaged features.
    (np.ndarray) : B x ceil(N/2) mask.

    """

    _batch, _length, _dim = frames.shape

    if(_length % 2 == 1):
        frames = np.concatenate([frames, np.zeros((_batch, 1, _dim))], axis=1)
        mask = np.concatenate([mask, np.zeros((_batch, 1), dtype=bool)], axis=1)

    _weights = mask.astype(np.float64)
    _pairs = (frames * _weights[..., None]).reshape(_batch, -1, 2, _dim).sum(axis=2)
    _counts = _weights.reshape(_batch, -1, 2).sum(axis=2)

    _averaged = _pairs / np.maximum(_counts, 1.0)[..., None]

    return _averaged, _counts > 0
