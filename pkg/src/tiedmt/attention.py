"""Additive attention and attention-matrix utilities.

Matrices handed out of this module (and out of the models) are plain
``numpy`` arrays of shape (decoder steps, attended states); inside a
training step they are tensors so that regularisers can differentiate
through them.
"""

from __future__ import annotations

import os

import numpy as np

from . import tensor as tn
from .errors import ContractError, ShapeError


class AttentionLayer:
    """MLP scoring ``v . tanh(Wq q + Wk k_n)`` followed by a tempered softmax."""

    def __init__(self, store, name, query_dim, key_dim, att_dim, temperature=1.0):
        if not temperature > 0:
            raise ContractError(f"temperature must be positive, got {temperature}")
        self.query_dim = query_dim
        self.key_dim = key_dim
        self.temperature = temperature
        self.wq = store.glorot(f"{name}.wq", att_dim, query_dim)
        self.wk = store.glorot(f"{name}.wk", key_dim, att_dim)
        self.v = store.glorot(f"{name}.v", 1, att_dim)

    def project_keys(self, keys):
        keys = tn.as_tensor(keys)
        if keys.ndim != 2 or keys.shape[1] != self.key_dim:
            raise ShapeError(f"attention keys {keys.shape} do not have {self.key_dim} columns")
        return tn.matmul(keys, self.wk)

    def weights(self, keys_proj, query, temperature=None):
        T = self.temperature if temperature is None else temperature
        qp = tn.linear(self.wq, query)
        return tn.additive_attention(keys_proj, qp, self._v(), T)

    def _v(self):
        # stored as (1, A) so Glorot bounds match a projection to one unit
        return tn.lookup(self.v, 0)


def attend(layer: AttentionLayer, query, keys, temperature=None):
    """Return ``(context, weights)`` for one query over the rows of ``keys``."""
    keys = tn.as_tensor(keys)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise ContractError(f"attention needs at least one key, got shape {keys.shape}")
    query = tn.as_tensor(query)
    if query.shape != (layer.query_dim,):
        raise ShapeError(f"query {query.shape} does not match ({layer.query_dim},)")
    row = layer.weights(layer.project_keys(keys), query, temperature)
    return tn.matmul(row, keys), row


def is_row_stochastic(A, tol=1e-9) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and bool(np.all(A >= 0)) and bool(np.all(np.abs(A.sum(axis=1) - 1) <= tol))


def attention_mass_in_spans(A, spans) -> float:
    """Fraction of the total mass of ``A`` that falls inside ``spans``.

    Each span is ``((row_start, row_stop), (col_start, col_stop))`` with
    half-open bounds; overlapping spans are counted once.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"attention matrix must be 2-D, got {A.shape}")
    M, N = A.shape
    mask = np.zeros(A.shape, dtype=bool)
    for (r0, r1), (c0, c1) in spans:
        if not (0 <= r0 <= r1 <= M and 0 <= c0 <= c1 <= N):
            raise ContractError(f"span rows {r0}:{r1}, cols {c0}:{c1} outside a {M}x{N} matrix")
        mask[r0:r1, c0:c1] = True
    total = A.sum()
    if total <= 0:
        return 0.0
    return float(A[mask].sum() / total)


def format_attention(A) -> str:
    A = np.asarray(A, dtype=np.float64)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in A]
    return "\n".join(lines) + "\n"


def parse_attention(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ContractError("empty attention matrix text")
    M, N = (int(x) for x in lines[0].split())
    rows = [[float(x) for x in ln.split()] for ln in lines[1:1 + M]]
    if len(rows) != M or any(len(r) != N for r in rows):
        raise ShapeError(f"attention text does not hold a {M}x{N} matrix")
    return np.array(rows, dtype=np.float64).reshape(M, N)


def write_attention(path, A):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(format_attention(A))
    os.replace(tmp, path)


def read_attention(path) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        return parse_attention(f.read())
