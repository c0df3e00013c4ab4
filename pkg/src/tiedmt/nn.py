"""Embeddings, LSTM cells, the two encoders and the output projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ContractError, ShapeError
from .tensor import Tensor


class ParamStore:
    """Named, ordered collection of trainable tensors."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def _add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = tn.parameter(value, name=name)
        self.params[name] = t
        return t

    def glorot(self, name, rows, cols):
        bound = math.sqrt(6.0 / (rows + cols))
        return self._add(name, self.rng.uniform(-bound, bound, size=(rows, cols)))

    def zeros(self, name, *shape):
        return self._add(name, np.zeros(shape))

    def __iter__(self):
        return iter(self.params.values())

    def __getitem__(self, name):
        return self.params[name]

    def __len__(self):
        return len(self.params)

    def named(self):
        return list(self.params.items())

    def count(self):
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_state_dict(self, values):
        missing = set(self.params) - set(values)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in self.params.items():
            v = np.asarray(values[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeError(f"parameter {k}: stored shape {v.shape} != {p.shape}")
            p.value[...] = v


class LstmCell:
    def __init__(self, store: ParamStore, name: str, input_size: int, hidden_size: int):
        self.input_size = input_size
        self.hidden_size = hidden_size
        H = hidden_size
        self.w = store.glorot(f"{name}.w", 4 * H, input_size + H)
        self.b = store.zeros(f"{name}.b", 4 * H)
        self.b.value[H:2 * H] = 1.0  # forget gate

    @property
    def num_params(self):
        return self.w.size + self.b.size

    def zero_state(self):
        z = np.zeros(self.hidden_size)
        return Tensor(z), Tensor(z.copy())

    def step(self, h, c, x):
        return tn.lstm_step(self.w, self.b, x, h, c)

    def run(self, xs, reverse=False):
        return tn.lstm_sequence(self.w, self.b, xs, reverse=reverse)


def lstm_step(cell: LstmCell, prev_h, prev_c, x):
    """Advance ``cell`` by one input; returns ``(h, c)``."""
    x = tn.as_tensor(x)
    if x.shape != (cell.input_size,):
        raise ShapeError(f"lstm_step: input {x.shape} but cell expects ({cell.input_size},)")
    return cell.step(prev_h, prev_c, x)


class Embedding:
    def __init__(self, store: ParamStore, name: str, vocab_size: int, dim: int):
        self.vocab_size = vocab_size
        self.dim = dim
        self.table = store.glorot(f"{name}.emb", vocab_size, dim)

    def __call__(self, ids):
        return tn.lookup(self.table, ids)


class BiLstm:
    """One bidirectional layer; outputs are [forward; backward] per position."""

    def __init__(self, store, name, input_size, hidden_size):
        self.fwd = LstmCell(store, f"{name}.fwd", input_size, hidden_size)
        self.bwd = LstmCell(store, f"{name}.bwd", input_size, hidden_size)
        self.output_size = 2 * hidden_size

    def __call__(self, xs):
        return tn.concat([self.fwd.run(xs), self.bwd.run(xs, reverse=True)], axis=1)


class TextEncoder:
    def __init__(self, store, vocab_size, emb_dim, hidden, layers=1, name="enc"):
        self.embed = Embedding(store, f"{name}.src", vocab_size, emb_dim)
        self.layers = []
        size = emb_dim
        for k in range(layers):
            layer = BiLstm(store, f"{name}.l{k}", size, hidden)
            self.layers.append(layer)
            size = layer.output_size
        self.output_size = size

    def __call__(self, ids, dropout=0.0, rng=None, training=False):
        if len(ids) == 0:
            raise ContractError("cannot encode an empty token sequence")
        xs = tn.dropout(self.embed(list(ids)), dropout, rng, training)
        for layer in self.layers:
            xs = layer(xs)
        return xs


@dataclass
class SpeechEncoderConfig:
    input_dim: int = 39
    layer1_hidden: int = 128
    layer2_hidden: int = 128
    layer3_hidden: int = 512
    stride: int = 2

    def __post_init__(self):
        if self.stride < 1:
            raise ContractError(f"stride must be >= 1, got {self.stride}")

    def output_length(self, n: int) -> int:
        return -(-(-(-n // self.stride)) // self.stride)


def downsample(xs, stride=2):
    """Keep rows 0, stride, 2*stride, ...; a trailing odd row survives."""
    xs = tn.as_tensor(xs)
    if stride == 1:
        return xs
    return tn.take_rows(xs, np.arange(0, xs.shape[0], stride))


class SpeechEncoder:
    """Three-layer pyramid: BiLSTM over frames, then two LSTMs each reading
    every second output of the layer below."""

    def __init__(self, store, cfg: SpeechEncoderConfig, name="enc"):
        self.cfg = cfg
        self.layer1 = BiLstm(store, f"{name}.l0", cfg.input_dim, cfg.layer1_hidden)
        self.layer2 = LstmCell(store, f"{name}.l1", self.layer1.output_size, cfg.layer2_hidden)
        self.layer3 = LstmCell(store, f"{name}.l2", cfg.layer2_hidden, cfg.layer3_hidden)
        self.output_size = cfg.layer3_hidden

    def __call__(self, features, dropout=0.0, rng=None, training=False):
        feats = tn.as_tensor(features)
        if feats.ndim != 2 or feats.shape[1] != self.cfg.input_dim:
            raise ShapeError(f"speech features {feats.shape} do not have {self.cfg.input_dim} columns")
        if feats.shape[0] < 4:
            raise ContractError(f"speech input needs at least 4 frames, got {feats.shape[0]}")
        h = self.layer1(tn.dropout(feats, dropout, rng, training))
        h = self.layer2.run(downsample(h, self.cfg.stride))
        return self.layer3.run(downsample(h, self.cfg.stride))


def encode_text(encoder: TextEncoder, tokens):
    return encoder(tokens)


def encode_speech(encoder: SpeechEncoder, features):
    return encoder(features)


class Projection:
    def __init__(self, store, name, in_dim, vocab_size):
        self.in_dim = in_dim
        self.vocab_size = vocab_size
        self.w = store.glorot(f"{name}.w", vocab_size, in_dim)
        self.b = store.zeros(f"{name}.b", vocab_size)

    def logits(self, state):
        return tn.linear(self.w, state, self.b)

    def __call__(self, state):
        return project_vocab(self, state)


def project_vocab(proj: Projection, state):
    """Log-probabilities over the output vocabulary."""
    state = tn.as_tensor(state)
    if state.shape != (proj.in_dim,):
        raise ShapeError(f"projection expects ({proj.in_dim},), got {state.shape}")
    return tn.log_softmax(proj.logits(state))
