"""Single-task, multitask, cascade and triangle encoder-decoder models.

Every architecture shares one encoder.  The first decoder always attends
to the encoder states ``H``.  The second decoder attends to

* ``H`` (multitask),
* the first decoder's output states ``S1`` (cascade / reconstruction),
* both, with the two context vectors concatenated (triangle).

Text-side sequences are expected already encoded with a trailing EOS on
source and targets (see :mod:`tiedmt.corpus`), so a reconstruction target
is literally the source id sequence.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import tensor as tn
from .attention import AttentionLayer
from .errors import ConfigError, ContractError, ShapeError
from .nn import Embedding, LstmCell, ParamStore, Projection, SpeechEncoder, SpeechEncoderConfig, TextEncoder
from .tensor import Tensor

PAD, BOS, EOS, UNK = 0, 1, 2, 3
KINDS = ("single", "multitask", "cascade", "triangle")
CHECKPOINT_VERSION = 1


@dataclass
class SentenceTriple:
    """Source ``x`` (id list or (N, D) features) with one or two targets."""

    x: object
    y1: Sequence[int]
    y2: Optional[Sequence[int]] = None
    uid: str = ""

    def __post_init__(self):
        if len(self.x) == 0:
            raise ContractError("empty source sequence")
        for name, y in (("y1", self.y1), ("y2", self.y2)):
            if y is not None and (len(y) == 0 or y[-1] != EOS):
                raise ContractError(f"{name} must be non-empty and end with EOS")


@dataclass
class ScoreConfig:
    lam: float = 0.5
    trans: float = 0.0
    inv: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.trans < 0 or self.inv < 0:
            raise ConfigError("regulariser weights must be non-negative")


@dataclass
class ArchitectureConfig:
    kind: str = "single"
    reconstruction: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown architecture {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.reconstruction and self.kind != "cascade":
            raise ConfigError("reconstruction is a cascade variant")

    @property
    def two_decoders(self):
        return self.kind != "single"


@dataclass
class ModelConfig:
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    source: str = "text"  # or "speech"
    src_vocab: int = 0
    trg1_vocab: int = 0
    trg2_vocab: int = 0
    src_emb: int = 32
    trg_emb: int = 64
    enc_hidden: int = 64
    enc_layers: int = 1
    dec_hidden: int = 64
    dec_layers: int = 1
    att_dim: int = 64
    temperature: float = 1.0
    speech: SpeechEncoderConfig = field(default_factory=SpeechEncoderConfig)

    def __post_init__(self):
        if isinstance(self.arch, dict):
            self.arch = ArchitectureConfig(**self.arch)
        if isinstance(self.speech, dict):
            self.speech = SpeechEncoderConfig(**self.speech)
        if self.source not in ("text", "speech"):
            raise ConfigError(f"source must be 'text' or 'speech', got {self.source!r}")
        if self.arch.reconstruction:
            if self.source != "text":
                raise ConfigError("reconstruction needs a token-sequence source")
            self.trg2_vocab = self.src_vocab
        if self.dec_layers < 1 or self.enc_layers < 1:
            raise ConfigError("layer counts must be >= 1")

    def to_dict(self):
        return asdict(self)


def check_regularizers(arch: ArchitectureConfig, score: ScoreConfig):
    """Reject regularisers whose attention matrices the model never builds."""
    if score.trans > 0 and arch.kind != "triangle":
        raise ConfigError("the transitivity regulariser needs the triangle model (A2 and A12)")
    if score.inv > 0 and not (arch.kind == "cascade" and arch.reconstruction):
        raise ConfigError("the invertibility regulariser needs a reconstruction cascade")


class DecoderState(NamedTuple):
    hs: tuple
    cs: tuple


class Decoder:
    """Attentional LSTM decoder over one or more memories.

    At step m the previous top state queries each memory, the contexts are
    concatenated with the previous token's embedding, and the stacked LSTM
    produces ``s_m``; the output distribution is a softmax projection of
    ``s_m``.
    """

    def __init__(self, store, name, vocab_size, emb_dim, hidden, memory_dims,
                 att_dim, layers=1, temperature=1.0):
        self.vocab_size = vocab_size
        self.hidden = hidden
        self.memory_dims = list(memory_dims)
        self.embed = Embedding(store, f"{name}.trg", vocab_size, emb_dim)
        self.attentions = [
            AttentionLayer(store, f"{name}.att{k}", hidden, d, att_dim, temperature)
            for k, d in enumerate(self.memory_dims)
        ]
        size = emb_dim + sum(self.memory_dims)
        self.cells = []
        for k in range(layers):
            self.cells.append(LstmCell(store, f"{name}.lstm{k}", size, hidden))
            size = hidden
        self.proj = Projection(store, f"{name}.out", hidden, vocab_size)

    def prepare(self, memories):
        if len(memories) != len(self.attentions):
            raise ContractError(f"decoder expects {len(self.attentions)} memories, got {len(memories)}")
        return [(tn.as_tensor(m), att.project_keys(m)) for m, att in zip(memories, self.attentions)]

    def initial_state(self):
        z = np.zeros(self.hidden)
        return DecoderState(tuple(Tensor(z) for _ in self.cells), tuple(Tensor(z) for _ in self.cells))

    def step(self, state, prev_token, prepared, dropout=0.0, rng=None, training=False,
             temperature=None):
        """Returns ``(new_state, logits, attention_rows, s_m)``."""
        query = state.hs[-1]
        rows, contexts = [], []
        for att, (mem, kp) in zip(self.attentions, prepared):
            row = att.weights(kp, query, temperature)
            rows.append(row)
            contexts.append(tn.matmul(row, mem))
        x = tn.concat([self.embed(prev_token)] + contexts)
        x = tn.dropout(x, dropout, rng, training)
        hs, cs = [], []
        for cell, h, c in zip(self.cells, state.hs, state.cs):
            h, c = cell.step(h, c, x)
            hs.append(h)
            cs.append(c)
            x = h
        out = tn.dropout(hs[-1], dropout, rng, training)
        return DecoderState(tuple(hs), tuple(cs)), self.proj.logits(out), rows, hs[-1]

    def force(self, memories, targets, dropout=0.0, rng=None, training=False, temperature=None):
        """Teacher-forced pass; returns ``(log P(targets), [A per memory], S)``."""
        if len(targets) == 0:
            raise ContractError("empty target sequence")
        prepared = self.prepare(memories)
        state = self.initial_state()
        prev = BOS
        logps, states = [], []
        rows = [[] for _ in prepared]
        for y in targets:
            state, logits, step_rows, s = self.step(state, prev, prepared, dropout, rng,
                                                    training, temperature)
            logps.append(tn.log_softmax_pick(logits, int(y)))
            states.append(s)
            for acc, r in zip(rows, step_rows):
                acc.append(r)
            prev = int(y)
        return tn.add_n(logps), [tn.stack(r) for r in rows], tn.stack(states)


class ForwardResult(NamedTuple):
    logp1: Tensor
    logp2: Optional[Tensor]
    A1: Tensor
    A2: Optional[Tensor]
    A12: Optional[Tensor]
    S1: Tensor
    H: Tensor


class TiedModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.store = ParamStore(np.random.default_rng(seed))
        c = config
        if c.source == "text":
            self.encoder = TextEncoder(self.store, c.src_vocab, c.src_emb, c.enc_hidden, c.enc_layers)
        else:
            self.encoder = SpeechEncoder(self.store, c.speech)
        enc_dim = self.encoder.output_size
        self.dec1 = Decoder(self.store, "dec1", c.trg1_vocab, c.trg_emb, c.dec_hidden, [enc_dim],
                            c.att_dim, c.dec_layers, c.temperature)
        kind = c.arch.kind
        mems = {"single": None, "multitask": [enc_dim], "cascade": [c.dec_hidden],
                "triangle": [c.dec_hidden, enc_dim]}[kind]
        self.dec2 = None
        if mems is not None:
            self.dec2 = Decoder(self.store, "dec2", c.trg2_vocab, c.trg_emb, c.dec_hidden, mems,
                                c.att_dim, c.dec_layers, c.temperature)

    @property
    def kind(self):
        return self.config.arch.kind

    @property
    def params(self):
        return list(self.store)

    def encode(self, x, dropout=0.0, rng=None, training=False):
        return self.encoder(x, dropout, rng, training)

    def second_memories(self, H, S1):
        return {"multitask": [H], "cascade": [S1], "triangle": [S1, H]}[self.kind]

    def forward(self, triple: SentenceTriple, dropout=0.0, rng=None, training=False,
                temperature=None) -> ForwardResult:
        H = self.encode(triple.x, dropout, rng, training)
        logp1, (A1,), S1 = self.dec1.force([H], triple.y1, dropout, rng, training, temperature)
        if self.dec2 is None:
            return ForwardResult(logp1, None, A1, None, None, S1, H)
        if triple.y2 is None:
            raise ContractError(f"{self.kind} model needs a second target")
        logp2, mats, _ = self.dec2.force(self.second_memories(H, S1), triple.y2, dropout, rng,
                                         training, temperature)
        A2 = A12 = None
        if self.kind == "multitask":
            (A2,) = mats
        elif self.kind == "cascade":
            (A12,) = mats
        else:
            A12, A2 = mats
        return ForwardResult(logp1, logp2, A1, A2, A12, S1, H)

    def objective(self, triple, score: ScoreConfig, dropout=0.0, rng=None, training=False):
        """Per-triple training objective (to be maximised)."""
        r = self.forward(triple, dropout, rng, training)
        if self.dec2 is None:
            return r.logp1
        obj = score_triple(r.logp1, r.logp2, score)
        if score.trans > 0:
            obj = loss_transitivity(obj, r.A1, r.A2, r.A12, score.trans)
        if score.inv > 0:
            obj = loss_invertibility(obj, r.A1, r.A12, score.inv)
        return obj

    # beam-search adaptors (see tiedmt.decoding)

    def first_pass(self, x, temperature=None):
        H = self.encode(x)
        return self._stepper(self.dec1, [H], temperature), H

    def second_pass(self, H, hyp1, temperature=None):
        S1 = tn.Tensor(np.stack([t[0] for t in hyp1.trace])) if hyp1.trace else None
        return self._stepper(self.dec2, self.second_memories(H, S1), temperature)

    def _stepper(self, dec, memories, temperature):
        prepared = dec.prepare(memories)

        def step(state, token):
            state, logits, rows, s = dec.step(state, token, prepared, temperature=temperature)
            logp = tn.log_softmax(logits).value
            return logp, state, (s.value, [r.value for r in rows])

        return step, dec.initial_state()


def forward_single(model: TiedModel, x, y1):
    r = model.forward(SentenceTriple(x, y1))
    return r.logp1, r.A1


def forward_multitask(model: TiedModel, x, y1, y2):
    _require(model, "multitask")
    r = model.forward(SentenceTriple(x, y1, y2))
    return r.logp1, r.logp2, r.A1, r.A2


def forward_cascade(model: TiedModel, x, y1, y2):
    _require(model, "cascade")
    r = model.forward(SentenceTriple(x, y1, y2))
    return r.logp1, r.logp2, r.A1, r.A12


def forward_triangle(model: TiedModel, x, y1, y2):
    _require(model, "triangle")
    r = model.forward(SentenceTriple(x, y1, y2))
    return r.logp1, r.logp2, r.A1, r.A2, r.A12


def _require(model, kind):
    if model.kind != kind:
        raise ConfigError(f"expected a {kind} model, got {model.kind}")


def score_triple(logp1, logp2, cfg: ScoreConfig):
    """``lam * logP1 + (1 - lam) * logP2``; tensors in, tensor out."""
    if not isinstance(logp1, Tensor) and not isinstance(logp2, Tensor):
        return cfg.lam * float(logp1) + (1.0 - cfg.lam) * float(logp2)
    return tn.add(tn.scale(logp1, cfg.lam), tn.scale(logp2, 1.0 - cfg.lam))


def transitivity_penalty(A1, A2, A12):
    A1, A2, A12 = tn.as_tensor(A1), tn.as_tensor(A2), tn.as_tensor(A12)
    M1, N = A1.shape
    M2 = A2.shape[0]
    if A12.shape != (M2, M1) or A2.shape != (M2, N):
        raise ShapeError(f"transitivity: A1 {A1.shape}, A2 {A2.shape}, A12 {A12.shape} do not compose")
    return tn.frobenius_norm_sq(tn.sub(tn.matmul(A12, A1), A2))


def invertibility_penalty(A1, A12):
    A1, A12 = tn.as_tensor(A1), tn.as_tensor(A12)
    if A1.ndim != 2 or A12.ndim != 2 or A12.shape != (A1.shape[1], A1.shape[0]):
        raise ShapeError(f"invertibility: A1 {A1.shape} times A12 {A12.shape} is not square")
    return tn.frobenius_norm_sq(tn.sub(tn.matmul(A1, A12), np.eye(A1.shape[0])))


def loss_transitivity(score, A1, A2, A12, weight):
    return tn.sub(score, tn.scale(transitivity_penalty(A1, A2, A12), weight))


def loss_invertibility(score, A1, A12, weight):
    return tn.sub(score, tn.scale(invertibility_penalty(A1, A12), weight))


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path, model: TiedModel, score: ScoreConfig, vocabs=None, extra=None):
    """Write parameters and configuration atomically (temp file + rename)."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "model": model.config.to_dict(),
        "score": asdict(score),
        "vocabs": vocabs or {},
        "extra": extra or {},
    }
    arrays = {f"p:{k}": v for k, v in model.store.state_dict().items()}
    arrays["meta"] = np.array(json.dumps(meta))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns ``(model, score_config, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        values = {k[2:]: z[k] for k in z.files if k.startswith("p:")}
    model = TiedModel(ModelConfig(**meta["model"]))
    model.store.load_state_dict(values)
    return model, ScoreConfig(**meta["score"]), meta
