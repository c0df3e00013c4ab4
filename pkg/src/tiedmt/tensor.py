"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape`.
Outside of a tape they only compute values, which is what inference uses::

    with Tape() as tape:
        loss = frobenius_norm_sq(matmul(a, b))
    backward(loss)          # a.grad, b.grad are now populated

The recurrent and attention kernels (``lstm_step``, ``lstm_sequence``,
``additive_attention``) are fused primitives with hand-written adjoints;
the test-suite checks each of them against finite differences and against
the same computation composed from elementary primitives.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

__all__ = [
    "Tensor", "Tape", "backward", "no_tape", "as_tensor", "parameter",
    "add", "sub", "mul", "neg", "scale", "add_n", "matmul", "linear",
    "tanh", "sigmoid", "exp", "log", "concat", "stack", "transpose",
    "lookup", "take_rows", "pick", "dropout", "sum_all",
    "frobenius_norm_sq", "softmax_temperature", "log_softmax",
    "log_softmax_pick", "nll_pick", "lstm_step", "lstm_sequence",
    "additive_attention", "numerical_grad", "gradcheck",
]

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array plus an optional gradient buffer."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_tape")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def numpy(self):
        return self.value

    def item(self):
        return float(self.value)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor):
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        loss.grad = np.ones_like(loss.value)
        deferred = {}
        for outputs, parents, fn in reversed(self.nodes):
            gouts = [o.grad for o in outputs]
            if all(g is None for g in gouts):
                continue
            if len(outputs) == 1:
                grads = fn(gouts[0])
            else:
                grads = fn(*[np.zeros_like(o.value) if g is None else g
                             for o, g in zip(outputs, gouts)])
            for p, g in zip(parents, grads):
                if g is None or not p.requires_grad:
                    continue
                if isinstance(g, _Lazy):
                    if p._tape is None:  # leaf: fold once at the end
                        deferred.setdefault(id(p), (p, []))[1].append(g)
                        continue
                    g = g.dense(p.value)
                if p.grad is None:
                    p.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    p.grad += g
        for p, parts in deferred.values():
            _fold(p, parts)


class _Lazy:
    __slots__ = ()


class _Outer(_Lazy):
    """Rank-one gradient ``outer(u, v)``, summed in one product at the end."""

    __slots__ = ("u", "v")

    def __init__(self, u, v):
        self.u, self.v = u, v

    def dense(self, like):
        return np.outer(self.u, self.v)


class _Rows(_Lazy):
    """Gradient that is ``g`` on rows ``idx`` and zero elsewhere."""

    __slots__ = ("idx", "g")

    def __init__(self, idx, g):
        self.idx, self.g = idx, g

    def dense(self, like):
        full = np.zeros_like(like)
        np.add.at(full, self.idx, self.g)
        return full


def _fold(p, parts):
    if p.grad is None:
        p.grad = np.zeros_like(p.value)
    outers = [q for q in parts if isinstance(q, _Outer)]
    if outers:
        p.grad += np.stack([q.u for q in outers]).T @ np.stack([q.v for q in outers])
    for q in parts:
        if isinstance(q, _Rows):
            np.add.at(p.grad, q.idx, q.g)


class no_tape:
    """Suspend recording, e.g. for evaluation inside a training step."""

    def __enter__(self):
        self._saved = _TAPES[:]
        _TAPES.clear()

    def __exit__(self, *exc):
        _TAPES[:] = self._saved
        return False


def backward(loss: Tensor):
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss is not reachable from any tape")
    loss._tape.backward(loss)


def _record(values, parents, fn):
    """Wrap output arrays, recording a node when gradients are needed."""
    single = not isinstance(values, tuple)
    if single:
        values = (values,)
    tape = _TAPES[-1] if _TAPES else None
    needs = tape is not None and any(p.requires_grad for p in parents)
    outs = tuple(Tensor(v, requires_grad=needs) for v in values)
    if needs:
        for o in outs:
            o._tape = tape
        tape.nodes.append((outs, parents, fn))
    return outs[0] if single else outs


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    try:
        out = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {sa} and {sb}") from None
    return _record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    try:
        out = a.value - b.value
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {sa} and {sb}") from None
    return _record(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    try:
        out = av * bv
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} and {b.shape}") from None
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _record(a.value * c, (a,), lambda g: (g * c,))


def add_n(tensors) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError("add_n of an empty list")
    out = tensors[0].value.copy()
    for t in tensors[1:]:
        if t.shape != out.shape:
            raise ShapeError(f"add_n: shape {t.shape} differs from {out.shape}")
        out += t.value
    return _record(out, tensors, lambda g: (g,) * len(tensors))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.value)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.value)
    return _record(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    if np.any(x <= 0):
        raise NumericError("log of a non-positive value")
    return _record(np.log(x), (a,), lambda g: (g / x,))


# -- linear algebra ------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product; 1-D operands act as row/column vectors."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or (av.ndim == 1 and bv.ndim == 1):
        raise ShapeError(f"matmul: unsupported shapes {a.shape} and {b.shape}")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    out = av @ bv

    def fn(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:  # matrix @ vector
            return _Outer(g, bv), av.T @ g
        return bv @ g, _Outer(av, g)  # vector @ matrix

    return _record(out, (a, b), fn)


def linear(w, x, b=None) -> Tensor:
    """``w @ x + b`` for a weight matrix and a vector."""
    w, x = as_tensor(w), as_tensor(x)
    wv, xv = w.value, x.value
    if wv.ndim != 2 or xv.ndim != 1 or wv.shape[1] != xv.shape[0]:
        raise ShapeError(f"linear: weight {w.shape} does not accept input {x.shape}")
    out = wv @ xv
    if b is None:
        return _record(out, (w, x), lambda g: (_Outer(g, xv), wv.T @ g))
    b = as_tensor(b)
    out = out + b.value
    return _record(out, (w, x, b), lambda g: (_Outer(g, xv), wv.T @ g, g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    return _record(a.value.T.copy(), (a,), lambda g: (g.T,))


def concat(tensors, axis=0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes " + ", ".join(str(t.shape) for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError("stack of an empty list")
    try:
        out = np.stack([t.value for t in tensors])
    except ValueError:
        raise ShapeError("stack: shapes differ") from None
    return _record(out, tensors, lambda g: tuple(g))


def lookup(table, ids) -> Tensor:
    """Row lookup: an int gives a vector, a sequence of ints a matrix."""
    table = as_tensor(table)
    tv = table.value
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= tv.shape[0]):
        raise ShapeError(f"lookup: id out of range for table with {tv.shape[0]} rows")
    out = tv[idx]

    return _record(out, (table,), lambda g: (_Rows(idx, g),))


def take_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    return lookup(a, idx)


def pick(a, i: int) -> Tensor:
    a = as_tensor(a)
    av = a.value

    def fn(g):
        full = np.zeros_like(av)
        full[i] = g
        return (full,)

    return _record(av[i], (a,), fn)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _record(np.sum(a.value), (a,), lambda g: (np.full(shape, float(g)),))


def frobenius_norm_sq(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"frobenius_norm_sq needs a matrix, got {a.shape}")
    av = a.value
    return _record(np.sum(av * av), (a,), lambda g: (2.0 * g * av,))


def dropout(a, p: float, rng, training=True) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p)."""
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _record(a.value * mask, (a,), lambda g: (g * mask,))


# -- normalisers ---------------------------------------------------------

def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_temperature(z, T: float = 1.0) -> Tensor:
    """Softmax of ``z / T`` along the last axis."""
    z = as_tensor(z)
    if not T > 0:
        raise ContractError(f"temperature must be positive, got {T}")
    if z.size == 0:
        raise ContractError("softmax of an empty vector")
    if not np.all(np.isfinite(z.value)):
        raise NumericError("softmax input contains non-finite values")
    y = _softmax(z.value / T)

    def fn(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)) / T,)

    return _record(y, (z,), fn)


def log_softmax(z) -> Tensor:
    z = as_tensor(z)
    x = z.value
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True))
    y = x - lse

    def fn(g):
        return (g - np.exp(y) * np.sum(g, axis=-1, keepdims=True),)

    return _record(y, (z,), fn)


def log_softmax_pick(logits, i: int) -> Tensor:
    """``log_softmax(logits)[i]`` as a single primitive."""
    logits = as_tensor(logits)
    x = logits.value
    m = x.max()
    e = np.exp(x - m)
    s = e.sum()
    out = x[i] - m - np.log(s)

    def fn(g):
        d = -e / s
        d[i] += 1.0
        return (g * d,)

    return _record(out, (logits,), fn)


def nll_pick(logprobs, i: int) -> Tensor:
    """Negative log-likelihood of entry ``i`` of a log-probability vector."""
    return neg(pick(logprobs, i))


# -- fused recurrent and attention kernels -------------------------------

def _lstm_gates(z, H):
    i = _sigmoid(z[:H])
    f = _sigmoid(z[H:2 * H])
    o = _sigmoid(z[2 * H:3 * H])
    u = np.tanh(z[3 * H:])
    return i, f, o, u


def _lstm_gate_grad(dh, dc, i, f, o, u, c_prev, tc):
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dct * u * i * (1.0 - i),
        dct * c_prev * f * (1.0 - f),
        do * o * (1.0 - o),
        dct * i * (1.0 - u * u),
    ])
    return dz, dct * f


def lstm_step(w, b, x, h, c):
    """One LSTM step; ``w`` is (4H, I+H) with gate blocks i, f, o, candidate.

    Returns the new ``(h, c)``.
    """
    w, b, x, h, c = (as_tensor(t) for t in (w, b, x, h, c))
    wv, xv, hv, cv = w.value, x.value, h.value, c.value
    H = hv.shape[0]
    I = xv.shape[0]
    if wv.shape != (4 * H, I + H) or b.shape != (4 * H,) or cv.shape != (H,):
        raise ShapeError(f"lstm_step: weight {w.shape}, bias {b.shape} do not fit "
                         f"input {x.shape}, state {h.shape}/{c.shape}")
    xh = np.concatenate([xv, hv])
    z = wv @ xh + b.value
    i, f, o, u = _lstm_gates(z, H)
    c_new = f * cv + i * u
    tc = np.tanh(c_new)
    h_new = o * tc

    def fn(dh, dc):
        dz, dc_prev = _lstm_gate_grad(dh, dc, i, f, o, u, cv, tc)
        dxh = wv.T @ dz
        return _Outer(dz, xh), dz, dxh[:I], dxh[I:], dc_prev

    return _record((h_new, c_new), (w, b, x, h, c), fn)


def lstm_sequence(w, b, xs, reverse=False) -> Tensor:
    """Run an LSTM from a zero state over the rows of ``xs`` (N, I).

    Output row n is the hidden state after consuming row n; with
    ``reverse`` the sequence is consumed from the last row to the first.
    """
    w, b, xs = as_tensor(w), as_tensor(b), as_tensor(xs)
    wv, bv, X = w.value, b.value, xs.value
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError(f"lstm_sequence needs a non-empty (N, I) input, got {xs.shape}")
    N, I = X.shape
    H = wv.shape[0] // 4
    if wv.shape != (4 * H, I + H) or bv.shape != (4 * H,):
        raise ShapeError(f"lstm_sequence: weight {w.shape} does not fit input width {I}")
    Wx, Wh = wv[:, :I], wv[:, I:]
    Zx = X @ Wx.T + bv
    order = range(N - 1, -1, -1) if reverse else range(N)
    Hs = np.zeros((N, H))
    Hprev = np.zeros((N, H))
    Cprev = np.zeros((N, H))
    gates = np.zeros((N, 4, H))
    TC = np.zeros((N, H))
    h = np.zeros(H)
    c = np.zeros(H)
    for t in order:
        Hprev[t], Cprev[t] = h, c
        i, f, o, u = _lstm_gates(Zx[t] + Wh @ h, H)
        c = f * c + i * u
        tc = np.tanh(c)
        h = o * tc
        gates[t] = (i, f, o, u)
        TC[t] = tc
        Hs[t] = h

    def fn(g):
        dZ = np.zeros((N, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in (range(N) if reverse else range(N - 1, -1, -1)):
            i, f, o, u = gates[t]
            dz, dc_next = _lstm_gate_grad(g[t] + dh_next, dc_next, i, f, o, u, Cprev[t], TC[t])
            dZ[t] = dz
            dh_next = Wh.T @ dz
        dW = np.concatenate([dZ.T @ X, dZ.T @ Hprev], axis=1)
        return dW, dZ.sum(axis=0), dZ @ Wx

    return _record(Hs, (w, b, xs), fn)


def additive_attention(keys_proj, query_proj, v, T: float = 1.0) -> Tensor:
    """Weights ``softmax(tanh(keys_proj + query_proj) @ v / T)``.

    ``keys_proj`` is (N, A), ``query_proj`` and ``v`` are (A,).
    """
    kp, qp, v = as_tensor(keys_proj), as_tensor(query_proj), as_tensor(v)
    K, q, vv = kp.value, qp.value, v.value
    if K.ndim != 2 or K.shape[0] == 0:
        raise ContractError(f"attention over an empty memory (keys {kp.shape})")
    if q.shape != (K.shape[1],) or vv.shape != q.shape:
        raise ShapeError(f"attention: keys {kp.shape}, query {qp.shape}, v {v.shape} disagree")
    if not T > 0:
        raise ContractError(f"temperature must be positive, got {T}")
    e = np.tanh(K + q)
    alpha = _softmax((e @ vv) / T)

    def fn(g):
        ds = alpha * (g - g @ alpha) / T
        dpre = np.outer(ds, vv) * (1.0 - e * e)
        return dpre, dpre.sum(axis=0), e.T @ ds

    return _record(alpha, (kp, qp, v), fn)


# -- finite differences --------------------------------------------------

def numerical_grad(f, tensors, eps=1e-5):
    """Central differences of the scalar ``f()`` w.r.t. each tensor's values."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.value)
        flat = t.value.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            fp = float(f().value)
            flat[k] = old - eps
            fm = float(f().value)
            flat[k] = old
            gflat[k] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def gradcheck(f, tensors, eps=1e-5):
    """Largest relative error between tape and finite-difference gradients.

    ``f`` builds a scalar from ``tensors`` (which must require grad).
    The error for one tensor is ``|g_tape - g_fd| / max(|g_tape|, |g_fd|)``
    in the Euclidean norm, and 0 when both gradients vanish.
    """
    for t in tensors:
        t.grad = None
    with Tape():
        out = f()
    backward(out)
    analytic = [np.zeros_like(t.value) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = numerical_grad(f, tensors, eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = max(np.linalg.norm(a), np.linalg.norm(n))
        if denom < 1e-12:
            continue
        worst = max(worst, np.linalg.norm(a - n) / denom)
    return worst
